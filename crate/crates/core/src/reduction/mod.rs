//! Presolve reductions: candidate apportionment by state score, weighted
//! k-means candidate generation, and customer-packet aggregation.

mod cls;
mod kmeans;
mod packets;

pub use cls::{cls_scores, scale_scores, ClsRecord};
pub use kmeans::{generate_candidates, kmeans_weighted, CandidateSet, KMeansResult};
pub use packets::{
    build_packets, packet_coverage_matrix, packet_distance_matrix, packet_exact_distance,
    packets_as_customers, ExactDistance, Packet, PacketSet, PacketSpec,
};

use alloc::string::String;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReductionError {
    #[error("no states supplied")]
    NoStates,
    #[error("state `{0}` is listed twice")]
    DuplicateState(String),
    #[error("customer `{customer}` has state `{state}`, which is not in the states table")]
    UnknownState { customer: String, state: String },
    #[error("{total} candidates cannot give each of {states} states at least one")]
    TooFewCandidates { total: usize, states: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k = {k} exceeds the {distinct} distinct points")]
    TooManyClusters { k: usize, distinct: usize },
    #[error("weights must be finite, non-negative and not all zero")]
    Weights,
    #[error("{points} points but {weights} weights")]
    WeightLength { points: usize, weights: usize },
    #[error("no customers supplied")]
    NoCustomers,
    #[error("customers span several states (`{0}` and `{1}`)")]
    MixedStates(String, String),
    #[error("packet radius must be positive and finite, got {0}")]
    Radius(f64),
    #[error("packet `{packet}` has {members} members but {distances} distances")]
    MemberDistances {
        packet: String,
        members: usize,
        distances: usize,
    },
    #[error("customer `{0}` is not in the customer list")]
    UnknownCustomer(String),
}
