//! Four-segment zero-shot prompt: framing, context, command, formatting.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{to_pretty, HomeContext};

pub const FRAMING: &str = "You are an AI that controls a smart home.";
pub const CONTEXT_LEAD: &str = "Here is the state of the devices in the home, in JSON format:";
pub const USER_LEAD: &str = "Here is information about the user:";
pub const COMMAND_LEAD: &str = "The user issues the command:";
pub const COMMAND_TAIL: &str = ". Change the device state as appropriate.";
pub const FORMATTING: &str = "Provide your response in JSON format.";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("command text is empty")]
    EmptyCommand,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Command {
    pub text: String,
    pub issued_at: DateTime<Utc>,
}

impl Command {
    pub fn new(text: impl Into<String>) -> Result<Self, PromptError> {
        Self::at(text, Utc::now())
    }

    pub fn at(text: impl Into<String>, issued_at: DateTime<Utc>) -> Result<Self, PromptError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(PromptError::EmptyCommand);
        }
        Ok(Self { text, issued_at })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub framing: String,
    pub context_segment: String,
    pub command_segment: String,
    pub formatting: String,
    pub assembled: String,
}

impl Prompt {
    /// Joins the four segments with single spaces. `devices` and `user` are
    /// inserted verbatim.
    pub fn assemble(devices: &str, user: &str, command: &str) -> Self {
        let framing = FRAMING.to_owned();
        let context_segment = format!("{CONTEXT_LEAD} {devices} {USER_LEAD} {user}");
        let command_segment = format!("{COMMAND_LEAD} {command}{COMMAND_TAIL}");
        let formatting = FORMATTING.to_owned();
        let assembled = [&framing, &context_segment, &command_segment, &formatting]
            .map(String::as_str)
            .join(" ");
        Self {
            framing,
            context_segment,
            command_segment,
            formatting,
            assembled,
        }
    }

    /// Byte offset where the command segment starts in `assembled`.
    pub fn command_offset(&self) -> usize {
        self.framing.len() + 1 + self.context_segment.len() + 1
    }
}

pub fn build_prompt(c: &HomeContext, cmd: &Command) -> Result<Prompt, PromptError> {
    if cmd.text.trim().is_empty() {
        return Err(PromptError::EmptyCommand);
    }
    Ok(Prompt::assemble(
        &to_pretty(&c.devices_json()),
        &to_pretty(&c.user_json()),
        &cmd.text,
    ))
}

/// Character count of the assembled prompt.
pub fn estimate_prompt_size(p: &Prompt) -> usize {
    p.assembled.chars().count()
}
