//! Natural-language smart-home control through a language model.
//!
//! The crate packages home state into a structured context, prompts a
//! completion backend with it, and turns the model's proposed state into a
//! validated set of device changes that can be applied to simulated or real
//! adapters.

pub mod context;
pub mod eval;
pub mod gateway;
pub mod prompt;
pub mod response;
pub mod schema;
pub mod service;
pub mod simulator;

pub use context::{parse_context, serialize_context, DevicePath, HomeContext, PropertyValue};
pub use prompt::{build_prompt, Command, Prompt};
pub use response::{Change, ChangeSet, ValidationPolicy};
pub use schema::{validate_context, SchemaRegistry, Violation, ViolationKind};
