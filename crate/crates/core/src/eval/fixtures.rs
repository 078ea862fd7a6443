//! The fixed context × command grid.

use std::fmt;
use std::str::FromStr;

use chrono::DateTime;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::context::{HomeContext, PropertyValue, Room, UserContext};
use crate::prompt::Command;
use crate::schema::SchemaRegistry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ContextName {
    Simple,
    Medium,
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CommandName {
    Direct,
    Indirect,
    Ambiguous,
    /// "Ambiguous*"
    AmbiguousWork,
    /// "Ambiguous**"
    AmbiguousSleep,
}

impl ContextName {
    pub const ALL: [ContextName; 3] = [ContextName::Simple, ContextName::Medium, ContextName::Complex];

    pub fn registry(self) -> SchemaRegistry {
        match self {
            ContextName::Simple => SchemaRegistry::simple(),
            ContextName::Medium => SchemaRegistry::medium(),
            ContextName::Complex => SchemaRegistry::complex(),
        }
    }

    pub fn context(self) -> HomeContext {
        let light = |extra_color: bool| {
            let mut props = vec![("state", PropertyValue::off())];
            if extra_color {
                props.extend(["r", "g", "b"].map(|c| (c, PropertyValue::Integer(255))));
            }
            props
        };
        let color = self != ContextName::Simple;
        let media = || [("state", PropertyValue::off()), ("volume", PropertyValue::Integer(20))];

        let mut bedroom = Room::new("bedroom").with_device("lights", "bedside_lamp", light(color));
        let mut living = Room::new("living_room")
            .with_device("lights", "overhead", light(color))
            .with_device("lights", "lamp", light(color));
        if self == ContextName::Complex {
            bedroom = bedroom.with_device("tvs", "bedroom_tv", media());
            living =
                living
                    .with_device("tvs", "living_room_tv", media())
                    .with_device("speakers", "smart_speaker", media());
        }
        HomeContext::new(UserContext::at("living_room"), [bedroom, living]).expect("fixture contexts are well-formed")
    }
}

impl CommandName {
    pub const ALL: [CommandName; 5] = [
        CommandName::Direct,
        CommandName::Indirect,
        CommandName::Ambiguous,
        CommandName::AmbiguousWork,
        CommandName::AmbiguousSleep,
    ];

    pub fn text(self) -> &'static str {
        match self {
            CommandName::Direct => "Turn on the light.",
            CommandName::Indirect => "Get ready for a party.",
            CommandName::Ambiguous => "I am tired.",
            CommandName::AmbiguousWork => "I am tired and I need to work.",
            CommandName::AmbiguousSleep => "I am tired and I want to sleep.",
        }
    }

    /// Whether this is one of the hint-amended ambiguous commands.
    pub fn is_amended(self) -> bool {
        matches!(self, CommandName::AmbiguousWork | CommandName::AmbiguousSleep)
    }

    pub fn label(self) -> &'static str {
        match self {
            CommandName::Direct => "Direct",
            CommandName::Indirect => "Indirect",
            CommandName::Ambiguous => "Ambiguous",
            CommandName::AmbiguousWork => "Ambiguous*",
            CommandName::AmbiguousSleep => "Ambiguous**",
        }
    }
}

impl fmt::Display for ContextName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl fmt::Display for CommandName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ContextName {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ContextName::ALL
            .into_iter()
            .find(|c| c.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| EvalError::UnknownFixture(s.to_owned()))
    }
}

impl FromStr for CommandName {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CommandName::ALL
            .into_iter()
            .find(|c| c.label().eq_ignore_ascii_case(s) || format!("{c:?}").eq_ignore_ascii_case(s))
            .ok_or_else(|| EvalError::UnknownFixture(s.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub context_name: ContextName,
    pub command_name: CommandName,
    pub context: HomeContext,
    pub command: Command,
}

impl Scenario {
    pub fn registry(&self) -> SchemaRegistry {
        self.context_name.registry()
    }
}

/// Fixture commands carry a fixed timestamp so fixtures are reproducible.
pub fn build_fixture(context_name: ContextName, command_name: CommandName) -> Scenario {
    Scenario {
        context_name,
        command_name,
        context: context_name.context(),
        command: Command::at(command_name.text(), DateTime::UNIX_EPOCH).expect("fixture commands are non-empty"),
    }
}

/// Name-based lookup, e.g. `("Complex", "Ambiguous**")`.
pub fn build_fixture_by_name(context_name: &str, command_name: &str) -> Result<Scenario, EvalError> {
    Ok(build_fixture(context_name.parse()?, command_name.parse()?))
}

/// The nine-cell grid followed by the two amended commands on Complex.
pub fn default_cells() -> Vec<Scenario> {
    let mut cells: Vec<_> = ContextName::ALL
        .into_iter()
        .flat_map(|ctx| {
            [CommandName::Direct, CommandName::Indirect, CommandName::Ambiguous]
                .into_iter()
                .map(move |cmd| build_fixture(ctx, cmd))
        })
        .collect();
    cells.push(build_fixture(ContextName::Complex, CommandName::AmbiguousWork));
    cells.push(build_fixture(ContextName::Complex, CommandName::AmbiguousSleep));
    cells
}

/// Parses `all` or a comma list of `Context/Command` pairs.
pub fn parse_cells(spec: &str) -> Result<Vec<Scenario>, EvalError> {
    if spec.trim().eq_ignore_ascii_case("all") {
        return Ok(default_cells());
    }
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|pair| {
            let (ctx, cmd) = pair
                .split_once('/')
                .ok_or_else(|| EvalError::UnknownFixture(pair.to_owned()))?;
            build_fixture_by_name(ctx, cmd)
        })
        .collect()
}
