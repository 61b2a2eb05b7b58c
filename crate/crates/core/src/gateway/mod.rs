//! Prompt construction and chat-backend plumbing.
//!
//! [`template`] turns registered templates plus a context of states and
//! differences into deterministic [`template::PromptSpec`]s; [`backend`]
//! sends them to a scripted mock or a remote chat-completion endpoint; and
//! [`partition`] uses both to split a complex object into region-labeled
//! states by asking the model to summarize it.

pub mod backend;
pub mod partition;
pub mod template;

pub use backend::{Backend, BackendKind, BackendSpec, Completion, MockBackend, RemoteBackend, TracedBackend, Usage};
pub use partition::{
    parse_partition_summary, summarize_partition, AttributeSpec, PartitionSchema,
    PARTITION_EXTRACTOR_ID,
};
pub use template::{
    Method, PromptSpec, PromptTurn, Role, Template, TemplateContext, TemplateRegistry,
    TurnTemplate,
};
