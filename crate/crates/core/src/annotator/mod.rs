//! LLM annotation of candidate pools.
//!
//! Backends are named `mock:<policy>:<seed>` (deterministic, offline) or
//! `http:<model>` (a text-completion endpoint).

mod backend;
mod http;
mod mock;
mod parse;
mod pipeline;
mod prompts;
mod quality;

pub use backend::{backend_from_name, BackendError, BackendSettings, LlmBackend, RateLimited, ScriptedBackend};
pub use http::HttpBackend;
pub use mock::{MockBackend, MockPolicy, EMPTY_SELECTION, REFUSAL, UNKNOWN_ANSWER};
pub use parse::{is_empty_selection, parse_id_list, render_id_list, ParseError};
pub use pipeline::{AnnotateError, AnnotationOutcome, Annotator, AnnotatorConfig, Stage, DEFAULT_WINDOW};
pub use prompts::{numbered_passages, Bindings, PromptSet, PromptTemplate, TemplateError, TemplateId};
pub use quality::{annotation_quality, AnnotationQuality, MissingJudgments};
