//! Scoring fused snapshots against simulator ground truth.

mod metrics;
mod run;

pub use metrics::{
    edge_accuracy, match_vertices, recall_at_k, snapshot_triples, truth_triples, vertex_accuracy, EdgeKind, Endpoint,
    GraphView, RecallMode, ScoredTriple, SynonymMap, Triple, VertexMatchConfig, ViewEdge, ViewVertex,
};
pub use run::{run_eval, run_seeds, score_snapshot, EvalConfig, EvalReport, IntervalMetrics, Pipeline, TickCounts};
