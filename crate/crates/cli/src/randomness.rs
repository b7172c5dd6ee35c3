//! Per-frame selector choices for both schemes on a lossless link.

use std::fmt::{self, Write};

use wban_core::iamkeys::{IamkeysReceiver, IamkeysSender, REF_LIST_LEN};
use wban_core::kemesis::{KemesisEndpoint, Role};
use wban_core::simnet::Deployment;

use crate::{write_file, CliError, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Iamkeys,
    Kemesis,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Iamkeys => "iamkeys",
            Scheme::Kemesis => "kemesis",
        })
    }
}

/// One emitted frame. For IAMKeys `index` is the reference slot and
/// `variant` the tone; for KEMESIS they are FRAME_NO and KEY_USED.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionRow {
    pub scheme: Scheme,
    pub frame: u64,
    pub index: usize,
    pub field: usize,
    pub variant: u8,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub df: usize,
}

impl ChiSquare {
    /// Goodness of fit of `observed` against the uniform distribution.
    /// `None` for fewer than two samples or a single category.
    pub fn uniform(observed: &[u64]) -> Option<Self> {
        let n: u64 = observed.iter().sum();
        if n < 2 || observed.len() < 2 {
            return None;
        }
        let expected = n as f64 / observed.len() as f64;
        let statistic = observed.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        Some(Self {
            statistic,
            df: observed.len() - 1,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RandomnessReport {
    pub rows: Vec<SelectionRow>,
    pub iamkeys_index_counts: Vec<u64>,
    pub iamkeys_field_counts: Vec<u64>,
    pub kemesis_frame_counts: Vec<u64>,
    pub kemesis_field_counts: Vec<u64>,
}

impl RandomnessReport {
    pub fn rows_for(&self, scheme: Scheme) -> impl Iterator<Item = &SelectionRow> {
        self.rows.iter().filter(move |r| r.scheme == scheme)
    }

    pub fn chi_squares(&self) -> Vec<(&'static str, Option<ChiSquare>)> {
        vec![
            ("iamkeys ref_index", ChiSquare::uniform(&self.iamkeys_index_counts)),
            ("iamkeys field_no", ChiSquare::uniform(&self.iamkeys_field_counts)),
            ("kemesis frame_no", ChiSquare::uniform(&self.kemesis_frame_counts)),
            ("kemesis field_no", ChiSquare::uniform(&self.kemesis_field_counts)),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("scheme,frame,index,field,variant\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{}", r.scheme, r.frame, r.index, r.field, r.variant);
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for (name, chi) in self.chi_squares() {
            match chi {
                Some(c) => {
                    let _ = writeln!(out, "{name}: chi-square {:.4} df {}", c.statistic, c.df);
                }
                None => {
                    let _ = writeln!(out, "{name}: chi-square omitted (too few frames)");
                }
            }
        }
        out
    }
}

fn setup(e: impl fmt::Display) -> CliError {
    CliError::Setup(e.to_string())
}

/// Emits `frames` IAMKeys frames and `frames` KEMESIS data frames on the
/// first sensor link, writing `randomness.csv` and `randomness.txt`.
pub fn cmd_randomness(config: &RunConfig) -> Result<RandomnessReport, CliError> {
    let cfg = config.scenario()?;
    let frame_cfg = cfg.profile.frame_config();
    let d = Deployment::new(cfg.seed, cfg.profile)?;
    let mut rows = Vec::with_capacity(2 * cfg.frames as usize);

    let mut iamkeys_index_counts = vec![0; REF_LIST_LEN];
    let mut iamkeys_field_counts = vec![0; frame_cfg.hashable_len()];
    let mut sender = IamkeysSender::new(frame_cfg, d.refs.clone(), d.wcc_selector).map_err(setup)?;
    let mut receiver = IamkeysReceiver::new(frame_cfg, d.refs).map_err(setup)?;
    for n in 0..cfg.frames {
        let readings: Vec<u8> = (0..frame_cfg.num_readings)
            .map(|j| (n as u8).wrapping_add(j as u8 * 40))
            .collect();
        let e = sender.emit(n as u32, &readings).map_err(setup)?;
        let delivered = receiver.accept(&e.wire).map_err(setup)?;
        sender.on_ack(&delivered.ack);
        iamkeys_index_counts[e.choice.ref_index] += 1;
        iamkeys_field_counts[usize::from(e.choice.field_no)] += 1;
        rows.push(SelectionRow {
            scheme: Scheme::Iamkeys,
            frame: n,
            index: e.choice.ref_index,
            field: usize::from(e.choice.field_no),
            variant: e.wire.tone,
        });
    }

    let mut kemesis_frame_counts = vec![0; frame_cfg.table_frames];
    let mut kemesis_field_counts = vec![0; frame_cfg.table_fields];
    let (sensor_sel, wcc_sel) = d.link_selectors[0];
    let mut sensor = KemesisEndpoint::new(frame_cfg, Role::Sensor, d.table.clone(), sensor_sel).map_err(setup)?;
    let mut wcc = KemesisEndpoint::new(frame_cfg, Role::Wcc, d.table, wcc_sel).map_err(setup)?;
    for n in 0..cfg.frames {
        let e = sensor.emit_data((n % 200) as u16).map_err(setup)?;
        let delivered = wcc.accept(&e.wire).map_err(setup)?;
        sensor.on_ack(&delivered.ack);
        let (frame, field) = (usize::from(e.wire.frame_no), usize::from(e.wire.field_no));
        kemesis_frame_counts[frame] += 1;
        kemesis_field_counts[field] += 1;
        rows.push(SelectionRow {
            scheme: Scheme::Kemesis,
            frame: n,
            index: frame,
            field,
            variant: e.wire.key_used as u8,
        });
    }

    let report = RandomnessReport {
        rows,
        iamkeys_index_counts,
        iamkeys_field_counts,
        kemesis_frame_counts,
        kemesis_field_counts,
    };
    config.create_out()?;
    write_file(&config.out.join("randomness.csv"), &report.to_csv())?;
    write_file(&config.out.join("randomness.txt"), &report.summary())?;
    Ok(report)
}
