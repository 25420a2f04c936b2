//! Two-round language pipeline. Round one asks a chat model to break an
//! instruction into described key frames; round two asks it to turn each
//! description into numbers (base velocity, heading, six front joints).
//! Replies are parsed with strict line grammars, checked against joint
//! limits, the velocity bound and keyword-gated kinematic rules, and mapped
//! to toe targets by forward kinematics.
//!
//! The shipped prompts are reconstructions of the published figure, not the
//! original text.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kv::{KvDocument, KvError};
use crate::robot_model::{JointId, JointKind, Leg, RobotModel};
use crate::target_gen::{wrap_angle, MotionTarget, TargetTrack, TrackRow};

pub const DECOMPOSE_PROMPT: &str = include_str!("../assets/instruct/decompose.prompt");
pub const FORMALIZE_PROMPT: &str = include_str!("../assets/instruct/formalize.prompt");
pub const DEFAULT_RULES: &str = include_str!("../assets/instruct/rules.kv");
pub const RULES_FORMAT: &str = "quadbiped-rules/1";

/// Largest commanded forward speed (m/s), same as the curriculum grid.
pub const MAX_FORWARD_SPEED: f64 = 0.3;
pub const DEFAULT_FRAME_DURATION: f64 = 1.0;

/// The five description fields, in reply order.
pub const DESCRIPTION_FIELDS: [&str; 5] = [
    "base_velocity",
    "hand_height",
    "hand_orientation",
    "calf_thigh_joint",
    "relation_to_previous",
];

/// FL then FR, hip, thigh, calf.
pub const FRONT_JOINTS: [JointId; 6] = [
    JointId::new(Leg::FL, JointKind::Hip),
    JointId::new(Leg::FL, JointKind::Thigh),
    JointId::new(Leg::FL, JointKind::Calf),
    JointId::new(Leg::FR, JointKind::Hip),
    JointId::new(Leg::FR, JointKind::Thigh),
    JointId::new(Leg::FR, JointKind::Calf),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("request timed out after {0:.1} s")]
    Timeout(f64),
    #[error("transport: {0}")]
    Transport(String),
    #[error("mock transcript exhausted after {0} replies")]
    Exhausted(usize),
}

/// Anything that answers a chat conversation with one reply.
pub trait ChatBackend {
    fn send(&mut self, messages: &[Message]) -> Result<String, BackendError>;
}

/// Replays canned replies in order.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    replies: Vec<String>,
    next: usize,
}

impl MockBackend {
    pub fn new(replies: Vec<String>) -> Self {
        Self { replies, next: 0 }
    }

    /// Loads every `*.txt` file except `instruction.txt`, sorted by name.
    pub fn from_dir(dir: &Path) -> std::io::Result<Self> {
        let mut paths: Vec<_> = fs::read_dir(dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()?;
        paths.retain(|p| p.extension().is_some_and(|e| e == "txt") && p.file_name().is_some_and(|n| n != "instruction.txt"));
        paths.sort();
        let replies = paths.iter().map(fs::read_to_string).collect::<Result<_, _>>()?;
        Ok(Self::new(replies))
    }
}

impl ChatBackend for MockBackend {
    fn send(&mut self, _messages: &[Message]) -> Result<String, BackendError> {
        let reply = self.replies.get(self.next).cloned().ok_or(BackendError::Exhausted(self.next))?;
        self.next += 1;
        Ok(reply)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("round {round} reply, line {line}: {message}")]
pub struct ParseError {
    pub round: u8,
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyFrameDescription {
    /// 1-based, as in the reply.
    pub index: usize,
    pub base_velocity: String,
    pub hand_height: String,
    pub hand_orientation: String,
    pub calf_thigh_joint: String,
    pub relation_to_previous: String,
}

impl KeyFrameDescription {
    pub fn field(&self, name: &str) -> Option<&str> {
        Some(match name {
            "base_velocity" => &self.base_velocity,
            "hand_height" => &self.hand_height,
            "hand_orientation" => &self.hand_orientation,
            "calf_thigh_joint" => &self.calf_thigh_joint,
            "relation_to_previous" => &self.relation_to_previous,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericKeyFrame {
    pub v_x: f64,
    pub heading_des: f64,
    /// See [`FRONT_JOINTS`] for the order.
    pub front_joints: [f64; 6],
    pub duration: f64,
}

/// `(line, label, value)` entries of one frame, keyed by its header line.
type FrameBlock = (usize, Vec<(usize, String, String)>);

/// Frame blocks: a `Frame N:` header followed by `label: value` lines.
/// Blank lines and markdown fence lines are ignored; anything else is an error.
fn frame_blocks(reply: &str, round: u8) -> Result<Vec<FrameBlock>, ParseError> {
    let err = |line: usize, message: String| ParseError { round, line, message };
    let mut blocks: Vec<FrameBlock> = Vec::new();
    for (i, raw) in reply.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with("```") {
            continue;
        }
        if let Some(rest) = line.strip_prefix("Frame ").and_then(|r| r.strip_suffix(':')) {
            let n: usize = rest.trim().parse().map_err(|_| err(line_no, format!("bad frame header `{line}`")))?;
            if n != blocks.len() + 1 {
                return Err(err(line_no, format!("expected Frame {}, found Frame {n}", blocks.len() + 1)));
            }
            blocks.push((line_no, Vec::new()));
            continue;
        }
        let Some((label, value)) = line.split_once(':') else {
            return Err(err(line_no, format!("expected `label: value` or a frame header, found `{line}`")));
        };
        let Some((_, fields)) = blocks.last_mut() else {
            return Err(err(line_no, "field before the first `Frame 1:` header".into()));
        };
        let label = label.trim();
        if fields.iter().any(|(_, l, _)| l == label) {
            return Err(err(line_no, format!("duplicate field `{label}`")));
        }
        fields.push((line_no, label.to_string(), value.trim().to_string()));
    }
    if blocks.is_empty() {
        return Err(err(reply.lines().count().max(1), "reply contains no frames".into()));
    }
    Ok(blocks)
}

/// Parses a round-one reply.
pub fn parse_descriptions(reply: &str) -> Result<Vec<KeyFrameDescription>, ParseError> {
    let err = |line: usize, message: String| ParseError { round: 1, line, message };
    frame_blocks(reply, 1)?
        .into_iter()
        .enumerate()
        .map(|(i, (header, fields))| {
            if let Some((line, label, _)) = fields.iter().find(|(_, l, _)| !DESCRIPTION_FIELDS.contains(&l.as_str())) {
                return Err(err(*line, format!("unknown field `{label}`")));
            }
            let mut values = Vec::with_capacity(5);
            for name in DESCRIPTION_FIELDS {
                match fields.iter().find(|(_, l, _)| l == name) {
                    None => return Err(err(header, format!("frame {}: missing field `{name}`", i + 1))),
                    Some((line, _, v)) if v.is_empty() => return Err(err(*line, format!("field `{name}` is empty"))),
                    Some((_, _, v)) => values.push(v.clone()),
                }
            }
            let mut v = values.into_iter();
            let mut next = || v.next().expect("five fields");
            Ok(KeyFrameDescription {
                index: i + 1,
                base_velocity: next(),
                hand_height: next(),
                hand_orientation: next(),
                calf_thigh_joint: next(),
                relation_to_previous: next(),
            })
        })
        .collect()
}

/// Parses a round-two reply. Values must be bare numbers.
pub fn parse_numeric(reply: &str) -> Result<Vec<NumericKeyFrame>, ParseError> {
    let err = |line: usize, message: String| ParseError { round: 2, line, message };
    let joint_names: Vec<String> = FRONT_JOINTS.iter().map(|j| j.to_string()).collect();
    frame_blocks(reply, 2)?
        .into_iter()
        .enumerate()
        .map(|(i, (header, fields))| {
            for (line, label, _) in &fields {
                let known = label == "v_x" || label == "heading" || label == "duration" || joint_names.contains(label);
                if !known {
                    return Err(err(*line, format!("unknown field `{label}`")));
                }
            }
            let number = |name: &str| -> Result<Option<f64>, ParseError> {
                match fields.iter().find(|(_, l, _)| l == name) {
                    None => Ok(None),
                    Some((line, _, v)) => match v.parse::<f64>() {
                        Ok(x) if x.is_finite() => Ok(Some(x)),
                        _ => Err(err(*line, format!("`{name}` is not a plain number: `{v}`"))),
                    },
                }
            };
            for (_, label, _) in &fields {
                number(label)?;
            }
            let required = |name: &str| {
                number(name)?.ok_or_else(|| err(header, format!("frame {}: missing field `{name}`", i + 1)))
            };
            let mut front_joints = [0.0; 6];
            for (slot, name) in front_joints.iter_mut().zip(&joint_names) {
                *slot = required(name)?;
            }
            Ok(NumericKeyFrame {
                v_x: required("v_x")?,
                heading_des: required("heading")?,
                front_joints,
                duration: number("duration")?.unwrap_or(DEFAULT_FRAME_DURATION),
            })
        })
        .collect()
}

/// "If `field` says `contains`, keep `joint` in `range`."
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicRule {
    pub id: String,
    pub text: String,
    pub field: String,
    pub contains: Vec<String>,
    pub joint: JointId,
    pub range: [f64; 2],
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

impl KinematicRule {
    /// True if one comma- or semicolon-separated clause of the field holds
    /// every keyword as a whole word.
    pub fn matches(&self, description: &KeyFrameDescription) -> bool {
        let Some(text) = description.field(&self.field) else {
            return false;
        };
        text.split([',', ';']).any(|clause| {
            let w = words(clause);
            self.contains.iter().all(|k| w.contains(k))
        })
    }

    pub fn prompt_line(&self) -> String {
        format!("- {}, then set {} within range ({}, {}) radians", self.text, self.joint, self.range[0], self.range[1])
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RuleSet {
    pub rules: Vec<KinematicRule>,
}

impl RuleSet {
    /// The bundled rules.
    pub fn standard(model: &RobotModel) -> Self {
        Self::from_text(DEFAULT_RULES, model).expect("bundled rules are valid")
    }

    /// Parses a rule file. Every interval must sit inside the joint's limits.
    pub fn from_text(text: &str, model: &RobotModel) -> Result<Self, KvError> {
        let doc = KvDocument::parse(text)?;
        let mut r = doc.reader();
        let format = r.str("format")?;
        if format != RULES_FORMAT {
            return Err(r.invalid("format", format!("unsupported format `{format}`, expected `{RULES_FORMAT}`")));
        }
        let mut ids: Vec<String> = Vec::new();
        for key in r.keys_with_prefix("rule.") {
            let id = key.trim_start_matches("rule.").split('.').next().unwrap_or("").to_string();
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
        let mut rules = Vec::with_capacity(ids.len());
        for id in ids {
            let key = |f: &str| format!("rule.{id}.{f}");
            let text = r.str(&key("text"))?.to_string();
            let field = r.str(&key("field"))?.to_string();
            if !DESCRIPTION_FIELDS.contains(&field.as_str()) {
                return Err(r.invalid(&key("field"), format!("unknown description field `{field}`")));
            }
            let contains = words(r.str(&key("contains"))?);
            if contains.is_empty() {
                return Err(r.invalid(&key("contains"), "needs at least one keyword"));
            }
            let joint_text = r.str(&key("joint"))?;
            let joint: JointId = joint_text.parse().map_err(|e: String| r.invalid(&key("joint"), e))?;
            let range = r.numbers::<2>(&key("range"))?;
            let lim = model.joint_limit(joint);
            if !(range[0] <= range[1] && range[0] >= lim.min && range[1] <= lim.max) {
                return Err(r.invalid(
                    &key("range"),
                    format!("[{}, {}] must be ordered and inside {joint} limits [{}, {}]", range[0], range[1], lim.min, lim.max),
                ));
            }
            rules.push(KinematicRule {
                id,
                text,
                field,
                contains,
                joint,
                range,
            });
        }
        r.finish()?;
        Ok(Self { rules })
    }

    pub fn prompt_lines(&self) -> String {
        self.rules.iter().map(KinematicRule::prompt_line).collect::<Vec<_>>().join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Rule id, or `joint_limit`, `velocity_bound`, `duration`.
    pub rule: String,
    pub joint: Option<String>,
    pub value: f64,
    pub allowed: [f64; 2],
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = self.joint.as_deref().unwrap_or(match self.rule.as_str() {
            "velocity_bound" => "v_x",
            _ => "duration",
        });
        write!(
            f,
            "{}: {what} = {} outside ({}, {})",
            self.rule, self.value, self.allowed[0], self.allowed[1]
        )
    }
}

/// Every violated constraint of `frame`, empty when the frame is valid.
pub fn validate_frame(
    frame: &NumericKeyFrame,
    description: &KeyFrameDescription,
    rules: &RuleSet,
    model: &RobotModel,
) -> Vec<Violation> {
    let mut out = Vec::new();
    if !(frame.v_x.abs() <= MAX_FORWARD_SPEED) {
        out.push(Violation {
            rule: "velocity_bound".into(),
            joint: None,
            value: frame.v_x,
            allowed: [-MAX_FORWARD_SPEED, MAX_FORWARD_SPEED],
        });
    }
    if !(frame.duration > 0.0 && frame.duration.is_finite()) {
        out.push(Violation {
            rule: "duration".into(),
            joint: None,
            value: frame.duration,
            allowed: [0.0, f64::INFINITY],
        });
    }
    for (joint, &value) in FRONT_JOINTS.iter().zip(&frame.front_joints) {
        let lim = model.joint_limit(*joint);
        if !(value >= lim.min && value <= lim.max) {
            out.push(Violation {
                rule: "joint_limit".into(),
                joint: Some(joint.to_string()),
                value,
                allowed: [lim.min, lim.max],
            });
        }
    }
    for rule in rules.rules.iter().filter(|r| r.matches(description)) {
        let slot = FRONT_JOINTS.iter().position(|j| *j == rule.joint);
        let Some(value) = slot.map(|i| frame.front_joints[i]) else {
            continue;
        };
        if !(value >= rule.range[0] && value <= rule.range[1]) {
            out.push(Violation {
                rule: rule.id.clone(),
                joint: Some(rule.joint.to_string()),
                value,
                allowed: rule.range,
            });
        }
    }
    out
}

/// One row per key frame at its start time, plus a closing row that holds
/// the last frame for its duration. Toe targets are FK of the front joints,
/// so consumers interpolating between rows move the toes affinely.
/// `provenance[i]` is the 0-based key frame behind row `i`.
pub fn frames_to_track(frames: &[NumericKeyFrame], model: &RobotModel) -> (TargetTrack, Vec<usize>) {
    let mut rows = Vec::with_capacity(frames.len() + 1);
    let mut provenance = Vec::with_capacity(frames.len() + 1);
    let mut t = 0.0;
    let row = |t: f64, f: &NumericKeyFrame| {
        let fl = [f.front_joints[0], f.front_joints[1], f.front_joints[2]];
        let fr = [f.front_joints[3], f.front_joints[4], f.front_joints[5]];
        TrackRow {
            t,
            target: MotionTarget {
                v_x: f.v_x,
                v_y: 0.0,
                heading_des: wrap_angle(f.heading_des),
                yaw_rate_obs: 0.0,
                toe_des: [model.toe(Leg::FL, fl), model.toe(Leg::FR, fr)],
                toe_witness: Some([fl, fr]),
            },
        }
    };
    for (i, f) in frames.iter().enumerate() {
        rows.push(row(t, f));
        provenance.push(i);
        t += f.duration;
    }
    if let Some(last) = frames.last() {
        rows.push(row(t, last));
        provenance.push(frames.len() - 1);
    }
    (TargetTrack { rows }, provenance)
}

#[derive(Debug, Error)]
pub enum InstructError {
    #[error("instruction is empty")]
    EmptyInstruction,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{0} (after one retry)")]
    Parse(ParseError),
    #[error("round 2 returned {got} frames for {expected} descriptions")]
    CountMismatch { expected: usize, got: usize },
    #[error("frame {frame} failed validation: {}", violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Validation { frame: usize, violations: Vec<Violation> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub request: Vec<Message>,
    pub reply: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstructOutput {
    pub descriptions: Vec<KeyFrameDescription>,
    pub frames: Vec<NumericKeyFrame>,
    pub track: TargetTrack,
    pub provenance: Vec<usize>,
    pub exchanges: Vec<Exchange>,
}

/// Drives both rounds over a backend and records every exchange.
pub struct Pipeline<'a, B: ChatBackend> {
    pub backend: &'a mut B,
    pub model: &'a RobotModel,
    pub rules: &'a RuleSet,
    pub exchanges: Vec<Exchange>,
}

impl<'a, B: ChatBackend> Pipeline<'a, B> {
    pub fn new(backend: &'a mut B, model: &'a RobotModel, rules: &'a RuleSet) -> Self {
        Self {
            backend,
            model,
            rules,
            exchanges: Vec::new(),
        }
    }

    fn send(&mut self, messages: &[Message]) -> Result<String, BackendError> {
        let reply = self.backend.send(messages)?;
        self.exchanges.push(Exchange {
            request: messages.to_vec(),
            reply: reply.clone(),
        });
        Ok(reply)
    }

    /// Sends, parses, and on a parse error retries once with a correction.
    fn ask<T>(
        &mut self,
        messages: &mut Vec<Message>,
        parse: impl Fn(&str) -> Result<T, ParseError>,
    ) -> Result<T, InstructError> {
        let reply = self.send(messages)?;
        messages.push(Message::new(Role::Assistant, reply.clone()));
        match parse(&reply) {
            Ok(v) => Ok(v),
            Err(first) => {
                messages.push(Message::new(
                    Role::User,
                    format!("Your reply could not be parsed ({first}). Reply again using exactly the required format and nothing else."),
                ));
                let reply = self.send(messages)?;
                messages.push(Message::new(Role::Assistant, reply.clone()));
                parse(&reply).map_err(InstructError::Parse)
            }
        }
    }

    pub fn decompose(&mut self, instruction: &str, messages: &mut Vec<Message>) -> Result<Vec<KeyFrameDescription>, InstructError> {
        if instruction.trim().is_empty() {
            return Err(InstructError::EmptyInstruction);
        }
        messages.push(Message::new(Role::System, DECOMPOSE_PROMPT));
        messages.push(Message::new(Role::User, instruction.trim()));
        self.ask(messages, parse_descriptions)
    }

    pub fn formalize(
        &mut self,
        descriptions: &[KeyFrameDescription],
        messages: &mut Vec<Message>,
    ) -> Result<Vec<NumericKeyFrame>, InstructError> {
        let limits = FRONT_JOINTS
            .iter()
            .map(|j| {
                let l = self.model.joint_limit(*j);
                format!("- {j}: [{}, {}]", l.min, l.max)
            })
            .collect::<Vec<_>>()
            .join("\n");
        let prompt = FORMALIZE_PROMPT
            .replace("{frame_count}", &descriptions.len().to_string())
            .replace("{limits}", &limits)
            .replace("{rules}", &self.rules.prompt_lines());
        messages.push(Message::new(Role::User, prompt));
        let frames = self.ask(messages, parse_numeric)?;
        if frames.len() != descriptions.len() {
            return Err(InstructError::CountMismatch {
                expected: descriptions.len(),
                got: frames.len(),
            });
        }
        for (i, (f, d)) in frames.iter().zip(descriptions).enumerate() {
            let violations = validate_frame(f, d, self.rules, self.model);
            if !violations.is_empty() {
                return Err(InstructError::Validation { frame: i + 1, violations });
            }
        }
        Ok(frames)
    }

    pub fn run(mut self, instruction: &str) -> Result<InstructOutput, InstructError> {
        let mut messages = Vec::new();
        let descriptions = self.decompose(instruction, &mut messages)?;
        let frames = self.formalize(&descriptions, &mut messages)?;
        let (track, provenance) = frames_to_track(&frames, self.model);
        Ok(InstructOutput {
            descriptions,
            frames,
            track,
            provenance,
            exchanges: self.exchanges,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_field_is_named() {
        let reply = "Frame 1:\nbase_velocity: stop\nhand_orientation: up\ncalf_thigh_joint: bent\nrelation_to_previous: first\n";
        let err = parse_descriptions(reply).unwrap_err();
        assert!(err.message.contains("missing field `hand_height`"), "{err}");
        assert_eq!(err.line, 1);
    }

    #[test]
    fn empty_reply_is_an_error() {
        assert!(parse_descriptions("").is_err());
        assert!(parse_numeric("  \n").is_err());
    }

    #[test]
    fn prose_numbers_are_rejected() {
        let reply = "Frame 1:\nv_x: about 0.1\n";
        let err = parse_numeric(reply).unwrap_err();
        assert_eq!(err.line, 2);
    }

    #[test]
    fn clause_scoped_matching() {
        let model = RobotModel::standin();
        let rules = RuleSet::standard(&model);
        let fr = rules.rules.iter().find(|r| r.id == "fr_hip_outward").unwrap();
        let fl = rules.rules.iter().find(|r| r.id == "fl_hip_outward").unwrap();
        let mut d = parse_descriptions(
            "Frame 1:\nbase_velocity: stop\nhand_height: low\nhand_orientation: left hand tilted outward, right hand forward\ncalf_thigh_joint: bent\nrelation_to_previous: first\n",
        )
        .unwrap()
        .remove(0);
        assert!(fl.matches(&d));
        assert!(!fr.matches(&d));
        d.hand_orientation = "the leftmost hand points outwards".into();
        assert!(!fl.matches(&d));
    }
}
