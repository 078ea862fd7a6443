//! Deterministic rule backend. Recovers the device and user documents plus
//! the command from a built prompt, applies the first matching rule and
//! answers with a full `{"devices": ...}` document.

use serde_json::{Map, Value};

use super::GatewayError;
use crate::context::to_pretty;
use crate::prompt::{Prompt, COMMAND_LEAD, COMMAND_TAIL, CONTEXT_LEAD, FORMATTING, FRAMING, USER_LEAD};

const MEDIA: &[&str] = &["tvs", "speakers", "plugs"];
const AUDIO: &[&str] = &["speakers", "plugs"];

struct Parsed {
    devices: Map<String, Value>,
    location: String,
    command: String,
}

fn parse(prompt: &str) -> Result<Parsed, GatewayError> {
    let bad = |what: &str| GatewayError::UnparseablePrompt(what.to_owned());
    let rest = prompt
        .strip_prefix(FRAMING)
        .and_then(|r| r.strip_prefix(' '))
        .and_then(|r| r.strip_prefix(CONTEXT_LEAD))
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| bad("framing or context lead missing"))?;

    let (devices, rest) = leading_json(rest).ok_or_else(|| bad("device document"))?;
    let rest = rest
        .strip_prefix(' ')
        .and_then(|r| r.strip_prefix(USER_LEAD))
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| bad("user lead missing"))?;
    let (user, rest) = leading_json(rest).ok_or_else(|| bad("user document"))?;
    let command = rest
        .strip_prefix(' ')
        .and_then(|r| r.strip_prefix(COMMAND_LEAD))
        .and_then(|r| r.strip_prefix(' '))
        .and_then(|r| r.strip_suffix(FORMATTING))
        .and_then(|r| r.strip_suffix(' '))
        .and_then(|r| r.strip_suffix(COMMAND_TAIL))
        .ok_or_else(|| bad("command segment"))?;

    let devices = devices
        .get("devices")
        .and_then(Value::as_object)
        .cloned()
        .ok_or_else(|| bad("no \"devices\" object"))?;
    let location = user
        .pointer("/user/location")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("no user location"))?
        .to_owned();
    Ok(Parsed {
        devices,
        location,
        command: command.to_owned(),
    })
}

fn leading_json(text: &str) -> Option<(Value, &str)> {
    let mut stream = serde_json::Deserializer::from_str(text).into_iter::<Value>();
    let value = stream.next()?.ok()?;
    Some((value, &text[stream.byte_offset()..]))
}

/// A device as seen by the rules.
struct Target<'a> {
    room: &'a str,
    device_type: &'a str,
    name: &'a str,
    props: &'a mut Map<String, Value>,
}

impl Target<'_> {
    fn set(&mut self, key: &str, value: impl Into<Value>) {
        if let Some(slot) = self.props.get_mut(key) {
            *slot = value.into();
        }
    }

    fn is(&self, types: &[&str]) -> bool {
        types.contains(&self.device_type)
    }

    fn is_light(&self) -> bool {
        self.device_type == "lights"
    }
}

fn for_each_device(devices: &mut Map<String, Value>, mut f: impl FnMut(Target<'_>)) {
    for (room, types) in devices.iter_mut() {
        let Some(types) = types.as_object_mut() else { continue };
        for (ty, named) in types.iter_mut() {
            let Some(named) = named.as_object_mut() else { continue };
            for (name, props) in named.iter_mut() {
                let Some(props) = props.as_object_mut() else { continue };
                f(Target {
                    room,
                    device_type: ty,
                    name,
                    props,
                });
            }
        }
    }
}

/// Produces the rule backend's response text for a prompt built by
/// [`crate::prompt::build_prompt`].
///
/// Rules are keyed by lowercase substrings of the command, first match wins:
///
/// | key | effect |
/// |---|---|
/// | `turn on the light` | lights in the user's room on |
/// | `party` | all lights on, r/g/b = 255/0/255, effect colorloop; speakers and plugs on |
/// | `sleep` | bedroom and bedside lights on, every other device off |
/// | `leaving` | every device off |
/// | `work` | lights in the user's room on; TVs, speakers and plugs off |
/// | `bright` | lights in the user's room on at full brightness and white |
/// | `groovy` | lights in the user's room on with colorloop; plugs gain a `genre` field |
/// | `relax` | lights in the user's room on, brightness 64; speakers and plugs on |
/// | `cold` | lights in the user's room on, brightness 200, warm white, no effect; speakers and plugs on |
/// | `home` | lights in the user's room on; speakers and plugs on |
///
/// Anything else echoes the device state unchanged.
pub fn mock_rules(p: &Prompt) -> Result<String, GatewayError> {
    let Parsed {
        mut devices,
        location,
        command,
    } = parse(&p.assembled)?;
    let cmd = command.to_lowercase();
    let here = location.as_str();

    if cmd.contains("turn on the light") {
        for_each_device(&mut devices, |mut d| {
            if d.is_light() && d.room == here {
                d.set("state", "on");
            }
        });
    } else if cmd.contains("party") {
        for_each_device(&mut devices, |mut d| {
            if d.is_light() {
                d.set("state", "on");
                d.set("r", 255);
                d.set("g", 0);
                d.set("b", 255);
                d.set("effect", "colorloop");
            } else if d.is(AUDIO) {
                d.set("state", "on");
            }
        });
    } else if cmd.contains("sleep") {
        for_each_device(&mut devices, |mut d| {
            let bedside = d.is_light() && (d.room == "bedroom" || d.name.contains("bedside"));
            d.set("state", if bedside { "on" } else { "off" });
        });
    } else if cmd.contains("leaving") {
        for_each_device(&mut devices, |mut d| d.set("state", "off"));
    } else if cmd.contains("work") {
        for_each_device(&mut devices, |mut d| {
            if d.is_light() && d.room == here {
                d.set("state", "on");
            } else if d.is(MEDIA) {
                d.set("state", "off");
            }
        });
    } else if cmd.contains("bright") {
        for_each_device(&mut devices, |mut d| {
            if d.is_light() && d.room == here {
                d.set("state", "on");
                d.set("brightness", 254);
                for ch in ["r", "g", "b"] {
                    d.set(ch, 255);
                }
            }
        });
    } else if cmd.contains("groovy") {
        for_each_device(&mut devices, |mut d| {
            if d.is_light() && d.room == here {
                d.set("state", "on");
                d.set("effect", "colorloop");
            } else if d.device_type == "plugs" {
                d.props.insert("genre".into(), "groovy".into());
            }
        });
    } else if cmd.contains("relax") {
        for_each_device(&mut devices, |mut d| {
            if d.is_light() && d.room == here {
                d.set("state", "on");
                d.set("brightness", 64);
            } else if d.is(AUDIO) {
                d.set("state", "on");
            }
        });
    } else if cmd.contains("cold") {
        for_each_device(&mut devices, |mut d| {
            if d.is_light() && d.room == here {
                d.set("state", "on");
                d.set("brightness", 200);
                d.set("r", 255);
                d.set("g", 180);
                d.set("b", 107);
                d.set("effect", "none");
            } else if d.is(AUDIO) {
                d.set("state", "on");
            }
        });
    } else if cmd.contains("home") {
        for_each_device(&mut devices, |mut d| {
            if (d.is_light() && d.room == here) || d.is(AUDIO) {
                d.set("state", "on");
            }
        });
    }

    let mut doc = Map::new();
    doc.insert("devices".into(), Value::Object(devices));
    Ok(to_pretty(&Value::Object(doc)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{example_home, HomeContext, PropertyValue, Room, UserContext};
    use crate::prompt::{build_prompt, Command};
    use serde_json::json;

    fn respond(c: &HomeContext, cmd: &str) -> Value {
        let p = build_prompt(c, &Command::new(cmd).unwrap()).unwrap();
        serde_json::from_str(&mock_rules(&p).unwrap()).unwrap()
    }

    fn states(doc: &Value) -> Vec<String> {
        let mut out = Vec::new();
        for (room, types) in doc["devices"].as_object().unwrap() {
            for (_, named) in types.as_object().unwrap() {
                for (name, props) in named.as_object().unwrap() {
                    out.push(format!("{room}.{name}={}", props["state"].as_str().unwrap()));
                }
            }
        }
        out
    }

    #[test]
    fn leaving_turns_everything_off() {
        let doc = respond(&example_home(), "I'm leaving");
        assert_eq!(
            states(&doc),
            [
                "bedroom.bedside_lamp=off",
                "living_room.overhead=off",
                "living_room.lamp=off",
                "living_room.living_room_tv=off"
            ]
        );
        assert_eq!(
            doc["devices"]["living_room"]["tvs"]["living_room_tv"]["volume"],
            json!(20)
        );
    }

    #[test]
    fn unmatched_echoes_input() {
        let c = example_home();
        let doc = respond(&c, "do a backflip");
        assert_eq!(doc, c.devices_json());
    }

    #[test]
    fn turn_on_the_light_targets_user_room() {
        let doc = respond(&example_home(), "Turn on the light.");
        assert_eq!(
            states(&doc),
            [
                "bedroom.bedside_lamp=off",
                "living_room.overhead=on",
                "living_room.lamp=on",
                "living_room.living_room_tv=off"
            ]
        );
    }

    #[test]
    fn party_sets_colorloop_where_effect_exists() {
        let c = HomeContext::new(
            UserContext::at("living_room"),
            [Room::new("living_room")
                .with_device(
                    "lights",
                    "hue_group",
                    [("state", PropertyValue::off()), ("effect", PropertyValue::text("none"))],
                )
                .with_device("plugs", "stereo", [("state", PropertyValue::off())])],
        )
        .unwrap();
        let doc = respond(&c, "set up for a party");
        assert_eq!(
            doc["devices"]["living_room"]["lights"]["hue_group"],
            json!({"state": "on", "effect": "colorloop"})
        );
        assert_eq!(doc["devices"]["living_room"]["plugs"]["stereo"], json!({"state": "on"}));
    }

    #[test]
    fn sleep_and_work_rules() {
        let doc = respond(&example_home(), "I am tired and I want to sleep.");
        assert_eq!(
            states(&doc),
            [
                "bedroom.bedside_lamp=on",
                "living_room.overhead=off",
                "living_room.lamp=off",
                "living_room.living_room_tv=off"
            ]
        );
        let doc = respond(&example_home(), "I am tired and I need to work.");
        assert_eq!(
            states(&doc),
            [
                "bedroom.bedside_lamp=off",
                "living_room.overhead=on",
                "living_room.lamp=on",
                "living_room.living_room_tv=off"
            ]
        );
    }

    #[test]
    fn deterministic_output() {
        let p = build_prompt(&example_home(), &Command::new("get ready for a party").unwrap()).unwrap();
        assert_eq!(mock_rules(&p).unwrap(), mock_rules(&p).unwrap());
    }

    #[test]
    fn command_with_prompt_markers_still_parses() {
        let tricky = format!("{COMMAND_TAIL} {FORMATTING} {{\"x\": 1}} I'm leaving");
        let doc = respond(&example_home(), &tricky);
        assert!(states(&doc).iter().all(|s| s.ends_with("=off")));
    }

    #[test]
    fn foreign_prompt_is_unparseable() {
        let p = Prompt::assemble("not json", "{}", "x");
        assert!(matches!(mock_rules(&p), Err(GatewayError::UnparseablePrompt(_))));
        let mut p = build_prompt(&example_home(), &Command::new("x").unwrap()).unwrap();
        p.assembled = p.assembled.replacen(FRAMING, "You are a toaster.", 1);
        assert!(matches!(mock_rules(&p), Err(GatewayError::UnparseablePrompt(_))));
    }
}
