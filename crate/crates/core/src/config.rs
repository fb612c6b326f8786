//! Text configuration shared by every tool.
//!
//! ```text
//! [scheme]
//! seed = 73746567...        # hex master secret
//! t = 2
//! m = 7                     # optional; smallest valid m when absent
//! p = 2147483647
//! epoch = 0
//! dummies = 11,12,13,14,15,16
//! allow_param_overlap = false
//! frame_len = 16
//!
//! [hierarchy]
//! class 1 param=5 parents=
//! class 3 param=13 parents=1,2 users=301,302
//! ```
//!
//! `parse(render(c)) == c` for every valid config, and rendering is canonical.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::hierarchy::{ClassId, ClassNode, DummyParams, Hierarchy, HierarchyError, MembershipEvent};
use crate::poly_keys::{KeyError, SymmetricPolynomialScheme, DEFAULT_MODULUS, DEFAULT_THRESHOLD};
use crate::stego_wav::DEFAULT_FRAME_LEN;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("[scheme] section has no seed")]
    MissingSeed,
    #[error("public parameter {value} of {class} is not below the modulus {p}")]
    ParamOutOfRange { class: ClassId, value: u64, p: u64 },
    #[error("dummy parameter {value} is not below the modulus {p}")]
    DummyOutOfRange { value: u64, p: u64 },
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Key(#[from] KeyError),
}

pub type Result<T, E = ConfigError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    pub hierarchy: Hierarchy,
    pub scheme: SymmetricPolynomialScheme,
    pub frame_len: usize,
}

impl Config {
    /// Assembles a config, choosing `m` from the hierarchy.
    pub fn new(hierarchy: Hierarchy, seed: Vec<u8>, t: u32, p: u64, epoch: u64, frame_len: usize) -> Result<Self> {
        let m = hierarchy.choose_m()?;
        let scheme = SymmetricPolynomialScheme::new(seed, t, m, p)?.with_epoch(epoch);
        let cfg = Self { hierarchy, scheme, frame_len };
        cfg.check_ranges()?;
        Ok(cfg)
    }

    fn check_ranges(&self) -> Result<()> {
        let p = self.scheme.p();
        for node in self.hierarchy.classes() {
            if node.public_param >= p {
                return Err(ConfigError::ParamOutOfRange { class: node.id, value: node.public_param, p });
            }
        }
        if let Some(&value) = self.hierarchy.dummies().values().iter().find(|&&d| d >= p) {
            return Err(ConfigError::DummyOutOfRange { value, p });
        }
        Ok(())
    }

    /// Re-derives `m` after the hierarchy changed shape, keeping seed, t, p and epoch.
    pub fn sync_scheme(&mut self) -> Result<()> {
        let m = self.hierarchy.choose_m()?;
        if m != self.scheme.m() {
            let s = &self.scheme;
            self.scheme = SymmetricPolynomialScheme::new(s.master_secret().to_vec(), s.t(), m, s.p())?
                .with_epoch(s.epoch());
        }
        self.check_ranges()
    }

    pub fn render(&self) -> String {
        let s = &self.scheme;
        let h = &self.hierarchy;
        let mut out = String::from("[scheme]\n");
        let _ = writeln!(out, "seed = {}", hex::encode(s.master_secret()));
        let _ = writeln!(out, "t = {}", s.t());
        if let Some(m) = h.configured_m() {
            let _ = writeln!(out, "m = {m}");
        }
        let _ = writeln!(out, "p = {}", s.p());
        let _ = writeln!(out, "epoch = {}", s.epoch());
        let _ = writeln!(out, "dummies = {}", join(h.dummies().values().iter()));
        let _ = writeln!(out, "allow_param_overlap = {}", h.allows_param_overlap());
        let _ = writeln!(out, "frame_len = {}", self.frame_len);
        out.push_str("\n[hierarchy]\n");
        for node in h.classes() {
            let _ = write!(
                out,
                "class {} param={} parents={}",
                node.id.0,
                node.public_param,
                join(node.parents.iter().map(|c| c.0))
            );
            if !node.users.is_empty() {
                let _ = write!(out, " users={}", join(node.users.iter()));
            }
            out.push('\n');
        }
        out
    }
}

fn join<T: ToString>(items: impl Iterator<Item = T>) -> String {
    items.map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn syntax(line: usize, msg: impl Into<String>) -> ConfigError {
    ConfigError::Syntax { line, msg: msg.into() }
}

fn parse_num<T: FromStr>(line: usize, what: &str, s: &str) -> Result<T> {
    s.trim().parse().map_err(|_| syntax(line, format!("bad {what} `{s}`")))
}

fn parse_list<T: FromStr>(line: usize, what: &str, s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| parse_num(line, what, v))
        .collect()
}

fn parse_bool(line: usize, s: &str) -> Result<bool> {
    match s.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(syntax(line, format!("expected true/false, got `{other}`"))),
    }
}

fn strip_comment(raw: &str) -> &str {
    raw.split('#').next().unwrap_or("").trim()
}

/// `class <id> param=<int> parents=<id,...> [users=<id,...>]`
fn parse_class_line(line: usize, text: &str) -> Result<ClassNode> {
    let mut words = text.split_whitespace();
    words.next(); // "class"
    let id: u32 = parse_num(line, "class id", words.next().ok_or_else(|| syntax(line, "missing class id"))?)?;
    let mut param = None;
    let mut parents = Vec::new();
    let mut users = Vec::new();
    for word in words {
        let (k, v) = word.split_once('=').ok_or_else(|| syntax(line, format!("expected key=value, got `{word}`")))?;
        match k {
            "param" => param = Some(parse_num(line, "param", v)?),
            "parents" => parents = parse_list(line, "parent id", v)?,
            "users" => users = parse_list(line, "user id", v)?,
            other => return Err(syntax(line, format!("unknown class attribute `{other}`"))),
        }
    }
    let param = param.ok_or_else(|| syntax(line, "class line needs param="))?;
    Ok(ClassNode::new(id, param, parents).with_users(users))
}

impl FromStr for Config {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self> {
        let mut seed = None;
        let mut t = DEFAULT_THRESHOLD;
        let mut m = None;
        let mut p = DEFAULT_MODULUS;
        let mut epoch = 0;
        let mut dummies = Vec::new();
        let mut overlap = false;
        let mut frame_len = DEFAULT_FRAME_LEN;
        let mut classes = Vec::new();
        let mut in_scheme = false;

        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = strip_comment(raw);
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                in_scheme = match line {
                    "[scheme]" => true,
                    "[hierarchy]" => false,
                    other => return Err(syntax(n, format!("unknown section {other}"))),
                };
                continue;
            }
            if line.starts_with("class ") {
                classes.push(parse_class_line(n, line)?);
                continue;
            }
            if !in_scheme {
                return Err(syntax(n, format!("unexpected line `{line}`")));
            }
            let (k, v) = line.split_once('=').ok_or_else(|| syntax(n, "expected key = value"))?;
            let v = v.trim();
            match k.trim() {
                "seed" => seed = Some(hex::decode(v).map_err(|_| syntax(n, "seed must be hex"))?),
                "t" => t = parse_num(n, "t", v)?,
                "m" if v == "auto" => m = None,
                "m" => m = Some(parse_num(n, "m", v)?),
                "p" => p = parse_num(n, "p", v)?,
                "epoch" => epoch = parse_num(n, "epoch", v)?,
                "dummies" => dummies = parse_list(n, "dummy", v)?,
                "allow_param_overlap" => overlap = parse_bool(n, v)?,
                "frame_len" => frame_len = parse_num(n, "frame_len", v)?,
                other => return Err(syntax(n, format!("unknown scheme key `{other}`"))),
            }
        }
        let seed = seed.ok_or(ConfigError::MissingSeed)?;
        let hierarchy = Hierarchy::new(classes, DummyParams(dummies), m, overlap)?;
        Config::new(hierarchy, seed, t, p, epoch, frame_len)
    }
}

/// Parses a churn script: one batch per line, events separated by `;`.
/// Class ids may be written `7` or `C7`.
///
/// ```text
/// join-user 2:25; join-user 2:26
/// leave-user 21
/// join-class 10 param=40 parents=2,4
/// leave-class 5
/// empty
/// ```
pub fn parse_churn_script(text: &str) -> Result<Vec<Vec<MembershipEvent>>> {
    let mut batches = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        if line == "empty" {
            batches.push(Vec::new());
            continue;
        }
        let batch = line
            .split(';')
            .map(str::trim)
            .filter(|e| !e.is_empty())
            .map(|e| parse_event(n, e))
            .collect::<Result<Vec<_>>>()?;
        batches.push(batch);
    }
    Ok(batches)
}

fn parse_event(line: usize, text: &str) -> Result<MembershipEvent> {
    let mut words = text.split_whitespace();
    let verb = words.next().unwrap_or_default();
    let arg = words.next().ok_or_else(|| syntax(line, format!("`{verb}` needs an argument")))?;
    let rest: Vec<&str> = words.collect();
    let event = match verb {
        "join-user" => {
            let (c, u) = arg.split_once(':').ok_or_else(|| syntax(line, "join-user takes <class>:<user>"))?;
            MembershipEvent::JoinUser { class: parse_num(line, "class id", c)?, user: parse_num(line, "user id", u)? }
        }
        "leave-user" => MembershipEvent::LeaveUser { user: parse_num(line, "user id", arg)? },
        "join-class" => {
            let mut param = None;
            let mut parents = BTreeSet::new();
            for word in &rest {
                match word.split_once('=') {
                    Some(("param", v)) => param = Some(parse_num(line, "param", v)?),
                    Some(("parents", v)) => {
                        parents = parse_list::<ClassId>(line, "parent id", v)?.into_iter().collect()
                    }
                    _ => return Err(syntax(line, format!("unexpected `{word}`"))),
                }
            }
            MembershipEvent::JoinClass {
                class: parse_num(line, "class id", arg)?,
                public_param: param.ok_or_else(|| syntax(line, "join-class needs param="))?,
                parents,
            }
        }
        "leave-class" => MembershipEvent::LeaveClass { class: parse_num(line, "class id", arg)? },
        other => return Err(syntax(line, format!("unknown event `{other}`"))),
    };
    if !matches!(event, MembershipEvent::JoinClass { .. }) && !rest.is_empty() {
        return Err(syntax(line, format!("trailing input after `{verb} {arg}`")));
    }
    Ok(event)
}

/// Configs for the reference hierarchies, with a fixed demonstration seed.
pub mod fixtures {
    use super::*;
    use crate::hierarchy::fixtures as h;

    pub const DEMO_SEED: &[u8] = b"stegokey demo seed";

    pub fn nine_class() -> Config {
        Config::new(h::nine_class(), DEMO_SEED.to_vec(), DEFAULT_THRESHOLD, DEFAULT_MODULUS, 0, DEFAULT_FRAME_LEN)
            .expect("valid fixture")
    }

    pub fn two_class() -> Config {
        Config::new(h::two_class(), DEMO_SEED.to_vec(), DEFAULT_THRESHOLD, DEFAULT_MODULUS, 0, DEFAULT_FRAME_LEN)
            .expect("valid fixture")
    }
}
