//! Replay ranking of held-out events, the short-term embedding store, and
//! link-prediction average precision for static models.
//!
//! Replay scores one event at a time against every item, records the
//! ground truth's rank, and only then reveals the event to the history index
//! and the store.

mod link;
mod metrics;
mod replay;

pub use link::{sample_negatives, score_pairs, static_link_prediction, LinkPrediction};
pub use metrics::{average_precision, mrr, recall_at_k};
pub use replay::{predict_topk, replay_evaluate, RankMode, RankingOutcome, Replay, ReplayOptions, ShortTermStore};
