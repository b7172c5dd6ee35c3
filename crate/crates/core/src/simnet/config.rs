//! Scenario files: `key = value` lines, `#` comments, and adversary lines
//! of the form `at <slot>: replay <capture>` or `at <slot>: flip <capture> <bit>`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::framing::FrameConfig;

/// `line` is 1-based; 0 marks a whole-config check.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}{message}", if *line == 0 { String::new() } else { format!("line {line}: ") })]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl ConfigError {
    fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Profile {
    /// 16x8 table of 8-bit cells, 16-bit selectors.
    #[default]
    Analysis,
    /// 256x16 table of 16-bit cells, 16-bit selectors.
    Realistic,
}

impl Profile {
    pub fn frame_config(self) -> FrameConfig {
        match self {
            Profile::Analysis => FrameConfig::analysis(),
            Profile::Realistic => FrameConfig::realistic(),
        }
    }

    pub fn selector_width(self) -> u8 {
        match self {
            Profile::Analysis => 16,
            Profile::Realistic => 16,
        }
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "analysis" => Ok(Profile::Analysis),
            "realistic" => Ok(Profile::Realistic),
            other => Err(format!("unknown profile {other:?} (analysis | realistic)")),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Analysis => "analysis",
            Profile::Realistic => "realistic",
        })
    }
}

/// Independent loss probabilities per direction of each link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossModel {
    /// WCC to monitor IAMKeys frames.
    pub iamkeys_data: f64,
    /// Monitor to WCC ACKs.
    pub iamkeys_ack: f64,
    /// Sensor to WCC: data frames and ACKs of control frames.
    pub kemesis_up: f64,
    /// WCC to sensor: ACKs and control frames.
    pub kemesis_down: f64,
}

impl LossModel {
    pub fn uniform(p: f64) -> Self {
        Self {
            iamkeys_data: p,
            iamkeys_ack: p,
            kemesis_up: p,
            kemesis_down: p,
        }
    }

    fn all(&self) -> [f64; 4] {
        [self.iamkeys_data, self.iamkeys_ack, self.kemesis_up, self.kemesis_down]
    }
}

impl Default for LossModel {
    fn default() -> Self {
        Self::uniform(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdversaryAction {
    /// Re-inject capture `index` verbatim.
    Replay(usize),
    /// Re-inject capture `index` with one bit flipped.
    Flip { index: usize, bit: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScriptAction {
    pub slot: u64,
    pub action: AdversaryAction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Slots in which the WCC emits an IAMKeys frame.
    pub frames: u64,
    pub seed: u64,
    pub profile: Profile,
    pub loss: LossModel,
    /// Data frames per link between refreshes; 0 disables refreshes.
    pub refresh_period: u32,
    /// Slots before a sleeping sensor wakes without an ACK; 0 disables.
    pub wake_timeout: u64,
    /// IAMKeys sequence numbers whose frames the channel drops.
    pub drop_data: BTreeSet<u32>,
    /// IAMKeys sequence numbers whose ACKs the channel drops.
    pub drop_ack: BTreeSet<u32>,
    pub script: Vec<ScriptAction>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            frames: 100,
            seed: 1,
            profile: Profile::Analysis,
            loss: LossModel::default(),
            refresh_period: crate::kemesis::DEFAULT_REFRESH_PERIOD,
            wake_timeout: 4,
            drop_data: BTreeSet::new(),
            drop_ack: BTreeSet::new(),
            script: Vec::new(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.frames == 0 {
            return Err(ConfigError::new(0, "frames must be at least 1"));
        }
        if let Some(p) = self.loss.all().into_iter().find(|p| !(0.0..=1.0).contains(p)) {
            return Err(ConfigError::new(0, format!("loss {p} outside [0, 1]")));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies the lines of `text` on top of the current values.
    pub fn apply(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("at ") {
                self.script.push(parse_action(rest, line_no)?);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::new(line_no, format!("expected key = value, got {line:?}")))?;
            self.set(key.trim(), value.trim(), line_no)?;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        let err = |m: String| ConfigError::new(line, m);
        fn num<T: FromStr>(v: &str, key: &str, line: usize) -> Result<T, ConfigError> {
            v.parse()
                .map_err(|_| ConfigError::new(line, format!("bad value {v:?} for {key}")))
        }
        match key {
            "frames" => self.frames = num(value, key, line)?,
            "seed" => self.seed = num(value, key, line)?,
            "profile" => self.profile = value.parse().map_err(err)?,
            "loss" => self.loss = LossModel::uniform(num(value, key, line)?),
            "loss.iamkeys_data" => self.loss.iamkeys_data = num(value, key, line)?,
            "loss.iamkeys_ack" => self.loss.iamkeys_ack = num(value, key, line)?,
            "loss.kemesis_up" => self.loss.kemesis_up = num(value, key, line)?,
            "loss.kemesis_down" => self.loss.kemesis_down = num(value, key, line)?,
            "refresh_period" => self.refresh_period = num(value, key, line)?,
            "wake_timeout" => self.wake_timeout = num(value, key, line)?,
            "drop_data" => self.drop_data = parse_seq_set(value, line)?,
            "drop_ack" => self.drop_ack = parse_seq_set(value, line)?,
            other => return Err(err(format!("unknown key {other:?}"))),
        }
        Ok(())
    }
}

/// `4, 5, 10-12` style lists.
fn parse_seq_set(value: &str, line: usize) -> Result<BTreeSet<u32>, ConfigError> {
    let mut out = BTreeSet::new();
    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let bad = || ConfigError::new(line, format!("bad sequence item {item:?}"));
        match item.split_once('-') {
            Some((a, b)) => {
                let a: u32 = a.trim().parse().map_err(|_| bad())?;
                let b: u32 = b.trim().parse().map_err(|_| bad())?;
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => {
                out.insert(item.parse().map_err(|_| bad())?);
            }
        }
    }
    Ok(out)
}

fn parse_action(rest: &str, line: usize) -> Result<ScriptAction, ConfigError> {
    let bad = || ConfigError::new(line, format!("bad adversary line {:?}", format!("at {rest}")));
    let (slot, action) = rest.split_once(':').ok_or_else(bad)?;
    let slot: u64 = slot.trim().parse().map_err(|_| bad())?;
    let words: Vec<&str> = action.split_whitespace().collect();
    let action = match words.as_slice() {
        ["replay", i] => AdversaryAction::Replay(i.parse().map_err(|_| bad())?),
        ["flip", i, b] => AdversaryAction::Flip {
            index: i.parse().map_err(|_| bad())?,
            bit: b.parse().map_err(|_| bad())?,
        },
        _ => return Err(bad()),
    };
    Ok(ScriptAction { slot, action })
}
