//! Detection scoring, efficiency indexes, volume similarity and
//! observer-score statistics.

mod detection;
mod efficiency;
mod scores;
mod similarity;
mod table;

pub use detection::{
    average_precision, curve_thresholds, format_eval_report, iou, mean_average_precision, pr_f1_curves,
    write_curve_csv, ClassReport, CurvePoint, EvalReport, DEFAULT_IOU_THRESHOLD,
};
pub use efficiency::{
    cpei, efficiency_rows, format_efficiency_table, pei, read_models, EfficiencyRow, ModelInfo, COLUMN_NOTE,
    MODEL_HEADER,
};
pub use scores::{
    format_score_report, read_paired_scores, read_score_tables, score_report, score_summary, wilcoxon_signed_rank,
    wilcoxon_signed_rank_with, PairedScores, ScoreRecord, ScoreReportRow, ScoreSummary, ScoreTable, WilcoxonError,
    WilcoxonMethod, WilcoxonResult, EXACT_MAX_N, MEAN_DIVERGENCE,
};
pub use similarity::{slice_ssim, volume_similarity, SimilarityError, VolumeSimilarity, PEAK, SSIM_WINDOW};
pub use table::TableError;
