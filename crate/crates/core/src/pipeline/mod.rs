//! From raw connection records to a model panel: ingestion with planar
//! projection, k-means clustering of stations with an elbow diagnostic,
//! aggregation into (cluster, slot) workload cells, and site-level splits.

mod aggregate;
mod ingest;
mod kmeans;
mod synthetic;

pub use aggregate::{aggregate, split_sites, Aggregated, SiteSplit, SlotSpec, DAY_SECONDS};
pub use ingest::{ingest, parse_timestamp, write_records_csv, ConnectionRecord, Ingested, Projection, Rejected};
pub use kmeans::{
    elbow_curve, kmeans, kmeans_from, read_clustering_csv, write_clustering_csv, write_elbow_csv, Clustering,
    ElbowPoint, DEFAULT_K,
};
pub use synthetic::{synthetic_records, SyntheticSpec};
