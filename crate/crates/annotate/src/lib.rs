//! Human annotation of scaled labels and augmented pairs.
//!
//! [`sample_tasks`] draws agreement or pair-quality tasks from a manifest,
//! [`init_store`] writes them to a store directory, [`Store`] hands them
//! out and records responses in an append-only event log, and [`router`]
//! exposes the store over HTTP.

pub mod http;
pub mod model;
pub mod sample;
pub mod stats;
pub mod store;

pub use http::{router, serve, task_view, NextTaskView, SubmitReply, TaskView};
pub use model::{Answer, InvalidAnswer, Ratings, RatingsInput, Submission, Task, TaskKind, TaskSpec, Verdict, LIKERT_MAX};
pub use sample::{eligible_tasks, sample_tasks, SampleError};
pub use stats::{agreement_rate, quality_distributions, Histogram, QualityDistributions, StatsError};
pub use store::{
    init_store, AgreementStats, EVENTS_FILE, Event, NextTask, Stats, Store, StoreConfig, StoreError, StoredResponse, SubmitError,
    SubmitOutcome, TaskCounts,
};
