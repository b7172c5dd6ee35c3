//! Slot-discrete simulation of the WBAN: three sensors, the WCC and the
//! monitoring station, joined by lossy one-slot links.
//!
//! Each slot runs in a fixed order: deliveries from the previous slot,
//! scripted adversary injections, sensor emissions, WCC refreshes, the
//! WCC's IAMKeys frame, then the monitor's slot tick. A few drain slots at
//! the end let in-flight frames and ACKs land.
//!
//! Channel losses and deployment come from a seeded ChaCha generator kept
//! apart from the protocol LFSRs.

pub mod config;
pub mod trace;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bits::BitString;
use crate::framing::{
    decode_kemesis_link, deserialize_ack, deserialize_iamkeys, serialize_ack, serialize_iamkeys, serialize_kemesis,
    DataFrame, FrameConfig, KemesisLinkMessage, KemesisWireFrame,
};
use crate::iamkeys::{IamkeysReceiver, IamkeysSender, ReferenceFrameList, Rejection};
use crate::kemesis::{kemesis_sign, Accepted, DummyTable, KemesisEndpoint, KemesisRejection, Role};
use crate::rng::{keystream, LfsrState};

pub use config::{AdversaryAction, ConfigError, LossModel, Profile, ScenarioConfig, ScriptAction};
pub use trace::{Event, EventKind, EventTrace};

pub const SENSOR_COUNT: usize = 3;
/// Heart rate, blood pressure, blood glucose.
pub const READING_RANGES: [(u8, u8); SENSOR_COUNT] = [(60, 100), (90, 140), (70, 140)];
/// Slots after the last emission slot that only deliver.
pub const DRAIN_SLOTS: u64 = 3;
/// Slots a refresh may wait for its ACK before the WCC abandons it.
pub const REFRESH_TIMEOUT: u64 = 4;

const DEPLOY_STREAM: u64 = 0;
const READING_STREAM: u64 = 1;
const CHANNEL_STREAM: u64 = 2;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no link between {from} and {to}")]
    UnsupportedPeer { from: NodeId, to: NodeId },
    #[error("deployment failed: {0}")]
    Setup(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    Sensor(usize),
    Wcc,
    Monitor,
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Sensor(i) => write!(f, "S{}", i + 1),
            NodeId::Wcc => f.write_str("WCC"),
            NodeId::Monitor => f.write_str("MON"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Iamkeys,
    Kemesis,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Iamkeys => "IAMKeys",
            Algorithm::Kemesis => "KEMESIS",
        })
    }
}

/// The algorithms a node carries: only the WCC holds both.
pub fn node_algorithms(node: NodeId) -> &'static [Algorithm] {
    match node {
        NodeId::Sensor(_) => &[Algorithm::Kemesis],
        NodeId::Wcc => &[Algorithm::Iamkeys, Algorithm::Kemesis],
        NodeId::Monitor => &[Algorithm::Iamkeys],
    }
}

/// Algorithm chooser: IAMKeys towards the monitor, KEMESIS towards sensors.
pub fn chooser_dispatch(from: NodeId, to: NodeId) -> Result<Algorithm, SimError> {
    match (from, to) {
        (NodeId::Wcc, NodeId::Monitor) | (NodeId::Monitor, NodeId::Wcc) => Ok(Algorithm::Iamkeys),
        (NodeId::Wcc, NodeId::Sensor(i)) | (NodeId::Sensor(i), NodeId::Wcc) if i < SENSOR_COUNT => {
            Ok(Algorithm::Kemesis)
        }
        _ => Err(SimError::UnsupportedPeer { from, to }),
    }
}

/// Keys an eavesdropper cannot rule out for a captured KEMESIS frame, by
/// trying every seed against the cleartext signature and KEY_USED.
pub fn eavesdrop_key_candidates(frame: &KemesisWireFrame, field_width: usize) -> Vec<BitString> {
    let cells = 1u32 << field_width;
    let mut seeds: Vec<u8> = (0..cells)
        .filter(|&v| kemesis_sign(v as u16) == frame.sig)
        .map(|v| v as u8)
        .collect();
    seeds.sort_unstable();
    seeds.dedup();
    let mut keys: Vec<BitString> = seeds
        .into_iter()
        .map(|s| {
            let k1 = keystream(s, field_width);
            match frame.key_used {
                crate::framing::KeyChoice::K1 => k1,
                crate::framing::KeyChoice::K2 => k1.complement(),
            }
        })
        .collect();
    keys.dedup();
    keys
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PacketKind {
    Iamkeys,
    Kemesis,
    Ack,
}

impl fmt::Display for PacketKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PacketKind::Iamkeys => "iamkeys",
            PacketKind::Kemesis => "kemesis",
            PacketKind::Ack => "ack",
        })
    }
}

/// A transmission as the adversary recorded it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Capture {
    pub index: usize,
    pub slot: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: PacketKind,
    pub seq_no: u32,
    pub bits: BitString,
}

#[derive(Debug, Clone)]
struct Packet {
    src: NodeId,
    dst: NodeId,
    kind: PacketKind,
    bits: BitString,
    /// Adversary injection rather than a genuine transmission.
    injected: bool,
    deliver_at: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Summary {
    pub iamkeys_emitted: u64,
    pub iamkeys_accepted: u64,
    pub iamkeys_acks_applied: u64,
    pub kemesis_data_emitted: u64,
    pub kemesis_data_accepted: u64,
    pub refreshes_sent: u64,
    /// Refreshes the WCC committed on the sensor's ACK.
    pub refreshes_committed: u64,
    /// Control frames sensors applied to their tables.
    pub refreshes_applied: u64,
    pub rejects: BTreeMap<String, u64>,
    pub drops: u64,
    pub injections: u64,
    pub injected_accepted: u64,
    pub key_checks: u64,
    pub key_mismatches: u64,
    pub alarms: u64,
    pub desyncs: u64,
    pub wake_timeouts: u64,
}

impl Summary {
    pub fn rejected(&self, reason: &str) -> u64 {
        self.rejects.get(reason).copied().unwrap_or(0)
    }

    pub fn total_rejects(&self) -> u64 {
        self.rejects.values().sum()
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "iamkeys accepted: {}/{}",
            self.iamkeys_accepted, self.iamkeys_emitted
        )?;
        writeln!(f, "iamkeys acks applied: {}", self.iamkeys_acks_applied)?;
        writeln!(
            f,
            "kemesis data accepted: {}/{}",
            self.kemesis_data_accepted, self.kemesis_data_emitted
        )?;
        writeln!(
            f,
            "kemesis refreshes committed: {}/{} (applied by sensors {})",
            self.refreshes_committed, self.refreshes_sent, self.refreshes_applied
        )?;
        writeln!(f, "rejects: {}", self.total_rejects())?;
        for (reason, n) in &self.rejects {
            writeln!(f, "  {reason}: {n}")?;
        }
        writeln!(f, "drops: {}", self.drops)?;
        writeln!(
            f,
            "injections: {} (accepted {})",
            self.injections, self.injected_accepted
        )?;
        writeln!(
            f,
            "key checks: {} (mismatches {})",
            self.key_checks, self.key_mismatches
        )?;
        writeln!(f, "alarms: {}", self.alarms)?;
        writeln!(f, "desyncs: {}", self.desyncs)?;
        writeln!(f, "wake timeouts: {}", self.wake_timeouts)
    }
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct SimReport {
    pub trace: EventTrace,
    pub summary: Summary,
    pub captures: Vec<Capture>,
    /// Plaintext frames the WCC sent, as the monitor should rebuild them.
    pub wcc_frames: Vec<DataFrame>,
    pub monitor_frames: Vec<DataFrame>,
    /// Cells where each sensor's table differs from the WCC's copy.
    pub table_diffs: Vec<Vec<(usize, usize)>>,
}

#[derive(Debug, Clone)]
struct SensorNode {
    endpoint: KemesisEndpoint,
    queue: VecDeque<(KemesisWireFrame, bool)>,
    asleep_since: Option<u64>,
}

#[derive(Debug, Clone)]
struct WccLink {
    endpoint: KemesisEndpoint,
    pending_since: Option<u64>,
}

fn iamkeys_reason(r: &Rejection) -> &'static str {
    match r {
        Rejection::Replay { .. } => "replay",
        Rejection::UnknownReference(_) => "unknown-reference",
        Rejection::AuthFailure => "auth-failure",
        Rejection::ConnectionLost => "connection-lost",
    }
}

fn kemesis_reason(r: &KemesisRejection) -> &'static str {
    match r {
        KemesisRejection::IndexOutOfRange { .. } => "index-out-of-range",
        KemesisRejection::SignatureMismatch => "signature-mismatch",
        KemesisRejection::Replay { .. } => "replay",
        KemesisRejection::Asleep => "asleep",
        KemesisRejection::Width(_) => "malformed",
    }
}

pub struct Simulation {
    cfg: ScenarioConfig,
    frame_cfg: FrameConfig,
    slot: u64,
    trace: EventTrace,
    summary: Summary,
    sensors: Vec<SensorNode>,
    links: Vec<WccLink>,
    sender: IamkeysSender,
    monitor: IamkeysReceiver,
    latest: Vec<u8>,
    in_flight: Vec<Packet>,
    captures: Vec<Capture>,
    /// Key each genuine emission used, by (src, dst, seq).
    sent_keys: BTreeMap<(NodeId, NodeId, u32), BitString>,
    wcc_frames: Vec<DataFrame>,
    monitor_frames: Vec<DataFrame>,
    readings_rng: ChaCha8Rng,
    channel_rng: ChaCha8Rng,
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn selector(rng: &mut ChaCha8Rng, width: u8) -> Result<LfsrState, SimError> {
    let max = (1u32 << width) - 1;
    LfsrState::selector(width, rng.random_range(1..=max)).map_err(|e| SimError::Setup(e.to_string()))
}

/// Pre-deployment state shared out of band: the five dummy frames, the
/// dummy table and one selector per endpoint.
#[derive(Debug, Clone)]
pub struct Deployment {
    pub refs: ReferenceFrameList,
    pub table: DummyTable,
    pub wcc_selector: LfsrState,
    /// Per sensor: the sensor's selector and the WCC's selector on that link.
    pub link_selectors: Vec<(LfsrState, LfsrState)>,
}

impl Deployment {
    pub fn new(seed: u64, profile: Profile) -> Result<Self, SimError> {
        let frame_cfg = profile.frame_config();
        let width = profile.selector_width();
        let setup = |e: &dyn fmt::Display| SimError::Setup(e.to_string());
        let mut deploy = stream(seed, DEPLOY_STREAM);
        let dummies: Vec<(u32, Vec<u8>)> = (0..crate::iamkeys::REF_LIST_LEN)
            .map(|_| {
                let ts = deploy.random::<u32>();
                let readings = (0..frame_cfg.num_readings).map(|_| deploy.random::<u8>()).collect();
                (ts, readings)
            })
            .collect();
        let refs = ReferenceFrameList::deploy(dummies).map_err(|e| setup(&e))?;
        let mask = ((1u32 << frame_cfg.field_width) - 1) as u16;
        let table = DummyTable::from_fn(&frame_cfg, |_, _| deploy.random::<u16>() & mask).map_err(|e| setup(&e))?;
        let wcc_selector = selector(&mut deploy, width)?;
        let mut link_selectors = Vec::with_capacity(SENSOR_COUNT);
        for _ in 0..SENSOR_COUNT {
            let sensor = selector(&mut deploy, width)?;
            let wcc = selector(&mut deploy, width)?;
            link_selectors.push((sensor, wcc));
        }
        Ok(Self {
            refs,
            table,
            wcc_selector,
            link_selectors,
        })
    }
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let frame_cfg = cfg.profile.frame_config();
        let setup = |e: &dyn fmt::Display| SimError::Setup(e.to_string());
        let d = Deployment::new(cfg.seed, cfg.profile)?;

        let sender = IamkeysSender::new(frame_cfg, d.refs.clone(), d.wcc_selector).map_err(|e| setup(&e))?;
        let monitor = IamkeysReceiver::new(frame_cfg, d.refs).map_err(|e| setup(&e))?;
        let mut sensors = Vec::with_capacity(SENSOR_COUNT);
        let mut links = Vec::with_capacity(SENSOR_COUNT);
        for (sensor_sel, wcc_sel) in d.link_selectors {
            let ep =
                KemesisEndpoint::new(frame_cfg, Role::Sensor, d.table.clone(), sensor_sel).map_err(|e| setup(&e))?;
            sensors.push(SensorNode {
                endpoint: ep,
                queue: VecDeque::new(),
                asleep_since: None,
            });
            let ep = KemesisEndpoint::new(frame_cfg, Role::Wcc, d.table.clone(), wcc_sel)
                .map_err(|e| setup(&e))?
                .with_refresh_period(cfg.refresh_period);
            links.push(WccLink {
                endpoint: ep,
                pending_since: None,
            });
        }

        Ok(Self {
            readings_rng: stream(cfg.seed, READING_STREAM),
            channel_rng: stream(cfg.seed, CHANNEL_STREAM),
            cfg,
            frame_cfg,
            slot: 0,
            trace: EventTrace::default(),
            summary: Summary::default(),
            sensors,
            links,
            sender,
            monitor,
            latest: vec![0; SENSOR_COUNT],
            in_flight: Vec::new(),
            captures: Vec::new(),
            sent_keys: BTreeMap::new(),
            wcc_frames: Vec::new(),
            monitor_frames: Vec::new(),
        })
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn total_slots(&self) -> u64 {
        self.cfg.frames + DRAIN_SLOTS
    }

    pub fn is_finished(&self) -> bool {
        self.slot >= self.total_slots()
    }

    pub fn trace(&self) -> &EventTrace {
        &self.trace
    }

    pub fn summary(&self) -> &Summary {
        &self.summary
    }

    pub fn captures(&self) -> &[Capture] {
        &self.captures
    }

    pub fn sender(&self) -> &IamkeysSender {
        &self.sender
    }

    pub fn monitor(&self) -> &IamkeysReceiver {
        &self.monitor
    }

    pub fn sensor_endpoint(&self, i: usize) -> &KemesisEndpoint {
        &self.sensors[i].endpoint
    }

    pub fn wcc_link(&self, i: usize) -> &KemesisEndpoint {
        &self.links[i].endpoint
    }

    fn log(&mut self, actor: NodeId, kind: EventKind, detail: String) {
        self.trace.push(self.slot, actor.to_string(), kind, detail);
    }

    fn reject(&mut self, actor: NodeId, reason: &str, detail: String) {
        *self.summary.rejects.entry(reason.to_string()).or_insert(0) += 1;
        self.log(actor, EventKind::Reject, format!("reason={reason} {detail}"));
    }

    fn loss_for(&self, src: NodeId, kind: PacketKind) -> f64 {
        let l = &self.cfg.loss;
        match (src, kind) {
            (NodeId::Wcc, PacketKind::Iamkeys) => l.iamkeys_data,
            (NodeId::Monitor, _) => l.iamkeys_ack,
            (NodeId::Sensor(_), _) => l.kemesis_up,
            (NodeId::Wcc, _) => l.kemesis_down,
        }
    }

    fn transmit(&mut self, src: NodeId, dst: NodeId, kind: PacketKind, seq_no: u32, bits: BitString) {
        let index = self.captures.len();
        self.log(
            src,
            EventKind::Tx,
            format!("cap={index} kind={kind} to={dst} seq={seq_no} bits={}", bits.len()),
        );
        self.captures.push(Capture {
            index,
            slot: self.slot,
            src,
            dst,
            kind,
            seq_no,
            bits: bits.clone(),
        });
        let draw: f64 = self.channel_rng.random();
        let scripted = match (src, kind) {
            (NodeId::Wcc, PacketKind::Iamkeys) => self.cfg.drop_data.contains(&seq_no),
            (NodeId::Monitor, PacketKind::Ack) => self.cfg.drop_ack.contains(&seq_no),
            _ => false,
        };
        if scripted || draw < self.loss_for(src, kind) {
            self.summary.drops += 1;
            let reason = if scripted { "script" } else { "loss" };
            self.log(src, EventKind::Drop, format!("cap={index} reason={reason}"));
            return;
        }
        self.in_flight.push(Packet {
            src,
            dst,
            kind,
            bits,
            injected: false,
            deliver_at: self.slot + 1,
        });
    }

    fn check_key(&mut self, src: NodeId, dst: NodeId, seq: u32, key: &BitString) -> &'static str {
        self.summary.key_checks += 1;
        match self.sent_keys.get(&(src, dst, seq)) {
            Some(k) if k == key => "yes",
            Some(_) => {
                self.summary.key_mismatches += 1;
                "no"
            }
            None => "unsent",
        }
    }

    /// Advances one slot.
    pub fn step(&mut self) {
        let t = self.slot;
        let (due, later): (Vec<Packet>, Vec<Packet>) = std::mem::take(&mut self.in_flight)
            .into_iter()
            .partition(|p| p.deliver_at <= t);
        self.in_flight = later;
        for p in due {
            self.deliver(p);
        }

        let actions: Vec<ScriptAction> = self.cfg.script.iter().copied().filter(|a| a.slot == t).collect();
        for a in actions {
            self.inject(a.action);
        }

        if t < self.cfg.frames {
            for i in 0..SENSOR_COUNT {
                self.sensor_turn(i);
            }
            for i in 0..SENSOR_COUNT {
                self.refresh_turn(i);
            }
            self.wcc_iamkeys_turn();
        }
        if (1..=self.cfg.frames).contains(&t) && self.monitor.end_slot() {
            self.summary.alarms += 1;
            self.log(
                NodeId::Monitor,
                EventKind::Alarm,
                format!("side=receiver cause=missed-slots run={}", self.monitor.missed_run()),
            );
        }
        self.slot += 1;
    }

    pub fn run(mut self) -> SimReport {
        while !self.is_finished() {
            self.step();
        }
        self.finish()
    }

    fn finish(self) -> SimReport {
        let table_diffs = (0..SENSOR_COUNT)
            .map(|i| self.sensors[i].endpoint.table().diff(self.links[i].endpoint.table()))
            .collect();
        SimReport {
            trace: self.trace,
            summary: self.summary,
            captures: self.captures,
            wcc_frames: self.wcc_frames,
            monitor_frames: self.monitor_frames,
            table_diffs,
        }
    }

    fn inject(&mut self, action: AdversaryAction) {
        let index = match action {
            AdversaryAction::Replay(i) | AdversaryAction::Flip { index: i, .. } => i,
        };
        let Some(cap) = self.captures.get(index).cloned() else {
            self.trace.push(
                self.slot,
                "ADV",
                EventKind::Inject,
                format!("cap={index} error=no-such-capture"),
            );
            return;
        };
        let mut bits = cap.bits.clone();
        let what = match action {
            AdversaryAction::Replay(_) => "replay".to_string(),
            AdversaryAction::Flip { bit, .. } => {
                if bit >= bits.len() {
                    self.trace.push(
                        self.slot,
                        "ADV",
                        EventKind::Inject,
                        format!("cap={index} error=bit-out-of-range bit={bit}"),
                    );
                    return;
                }
                bits.flip(bit);
                format!("flip bit={bit}")
            }
        };
        self.summary.injections += 1;
        self.trace.push(
            self.slot,
            "ADV",
            EventKind::Inject,
            format!("cap={index} action={} to={}", what.replace(' ', ":"), cap.dst),
        );
        self.deliver(Packet {
            src: cap.src,
            dst: cap.dst,
            kind: cap.kind,
            bits,
            injected: true,
            deliver_at: self.slot,
        });
    }

    fn note_accept(&mut self, injected: bool) -> &'static str {
        if injected {
            self.summary.injected_accepted += 1;
            " source=adversary"
        } else {
            ""
        }
    }

    fn deliver(&mut self, p: Packet) {
        match (p.dst, p.kind) {
            (NodeId::Monitor, PacketKind::Iamkeys) => self.monitor_receive(p),
            (NodeId::Wcc, PacketKind::Ack) if p.src == NodeId::Monitor => self.wcc_iamkeys_ack(p),
            (NodeId::Wcc, _) => self.wcc_kemesis_receive(p),
            (NodeId::Sensor(i), _) => self.sensor_receive(i, p),
            (dst, kind) => self.reject(dst, "malformed", format!("kind={kind}")),
        }
    }

    fn monitor_receive(&mut self, p: Packet) {
        let frame = match deserialize_iamkeys(&p.bits, &self.frame_cfg) {
            Ok(f) => f,
            Err(e) => {
                return self.reject(
                    NodeId::Monitor,
                    "malformed",
                    format!("error={}", e.to_string().replace(' ', "_")),
                )
            }
        };
        let was_alarmed = self.monitor.alarmed();
        match self.monitor.accept(&frame) {
            Ok(d) => {
                self.summary.iamkeys_accepted += 1;
                let matched = self.check_key(NodeId::Wcc, NodeId::Monitor, frame.seq_no, d.keys.k1());
                let src = self.note_accept(p.injected);
                let committed = d.committed.map(|s| format!(" commit={s}")).unwrap_or_default();
                self.log(
                    NodeId::Monitor,
                    EventKind::Accept,
                    format!(
                        "scheme=iamkeys seq={} ts={} readings={} key={} match={matched}{committed}{src}",
                        d.frame.seq_no,
                        d.frame.timestamp,
                        fmt_readings(&d.frame.readings),
                        d.keys.k1()
                    ),
                );
                self.monitor_frames.push(d.frame);
                self.transmit(
                    NodeId::Monitor,
                    NodeId::Wcc,
                    PacketKind::Ack,
                    d.ack.acked_seq_no,
                    serialize_ack(&d.ack),
                );
            }
            Err(r) => {
                self.reject(
                    NodeId::Monitor,
                    iamkeys_reason(&r),
                    format!("scheme=iamkeys seq={}", frame.seq_no),
                );
                if !was_alarmed && self.monitor.alarmed() {
                    self.summary.alarms += 1;
                    self.log(
                        NodeId::Monitor,
                        EventKind::Alarm,
                        format!("side=receiver cause=seq-gap seq={}", frame.seq_no),
                    );
                }
            }
        }
    }

    fn wcc_iamkeys_ack(&mut self, p: Packet) {
        let Ok(ack) = deserialize_ack(&p.bits) else {
            return self.reject(NodeId::Wcc, "malformed", "kind=ack".into());
        };
        if self.sender.on_ack(&ack) {
            self.summary.iamkeys_acks_applied += 1;
            self.log(
                NodeId::Wcc,
                EventKind::Commit,
                format!("scheme=iamkeys ref={}", ack.acked_seq_no),
            );
        }
    }

    fn wcc_kemesis_receive(&mut self, p: Packet) {
        let NodeId::Sensor(i) = p.src else {
            return self.reject(NodeId::Wcc, "malformed", format!("from={}", p.src));
        };
        match decode_kemesis_link(&p.bits, &self.frame_cfg) {
            Err(e) => self.reject(
                NodeId::Wcc,
                "malformed",
                format!("link={} error={}", p.src, e.to_string().replace(' ', "_")),
            ),
            Ok(KemesisLinkMessage::Ack(ack)) => {
                let out = self.links[i].endpoint.on_ack(&ack);
                if let Some(c) = out.committed {
                    self.links[i].pending_since = None;
                    self.summary.refreshes_committed += 1;
                    self.log(
                        NodeId::Wcc,
                        EventKind::Commit,
                        format!(
                            "scheme=kemesis link={} seq={} cell={},{} value={:#x}",
                            p.src, c.seq_no, c.frame_no, c.field_no, c.new_value
                        ),
                    );
                }
            }
            Ok(KemesisLinkMessage::Frame(frame)) => match self.links[i].endpoint.accept(&frame) {
                Ok(d) => {
                    let matched = self.check_key(p.src, NodeId::Wcc, frame.seq_no, &d.key);
                    let src = self.note_accept(p.injected);
                    match d.accepted {
                        Accepted::Data(v) => {
                            self.summary.kemesis_data_accepted += 1;
                            self.latest[i] = v as u8;
                            self.log(
                                NodeId::Wcc,
                                EventKind::Accept,
                                format!(
                                    "scheme=kemesis link={} seq={} value={v} key={} match={matched}{src}",
                                    p.src, frame.seq_no, d.key
                                ),
                            );
                        }
                        Accepted::Refreshed {
                            frame_no,
                            field_no,
                            new,
                            ..
                        } => {
                            self.log(
                                NodeId::Wcc,
                                EventKind::Commit,
                                format!("scheme=kemesis link={} seq={} cell={frame_no},{field_no} value={new:#x} key={} match={matched}{src}", p.src, frame.seq_no, d.key),
                            );
                        }
                    }
                    self.transmit(
                        NodeId::Wcc,
                        p.src,
                        PacketKind::Ack,
                        d.ack.acked_seq_no,
                        serialize_ack(&d.ack),
                    );
                }
                Err(r) => self.reject(
                    NodeId::Wcc,
                    kemesis_reason(&r),
                    format!("scheme=kemesis link={} seq={}", p.src, frame.seq_no),
                ),
            },
        }
    }

    fn sensor_receive(&mut self, i: usize, p: Packet) {
        let me = NodeId::Sensor(i);
        match decode_kemesis_link(&p.bits, &self.frame_cfg) {
            Err(e) => self.reject(me, "malformed", format!("error={}", e.to_string().replace(' ', "_"))),
            Ok(KemesisLinkMessage::Ack(ack)) => {
                let out = self.sensors[i].endpoint.on_ack(&ack);
                if out.woke {
                    self.sensors[i].asleep_since = None;
                    self.log(me, EventKind::Wake, format!("by=ack seq={}", ack.acked_seq_no));
                    self.drain_queue(i);
                }
            }
            Ok(KemesisLinkMessage::Frame(frame)) => {
                if self.sensors[i].endpoint.awake() {
                    self.sensor_process(i, frame, p.injected);
                } else {
                    self.log(me, EventKind::Queue, format!("seq={}", frame.seq_no));
                    self.sensors[i].queue.push_back((frame, p.injected));
                }
            }
        }
    }

    fn drain_queue(&mut self, i: usize) {
        while let Some((frame, injected)) = self.sensors[i].queue.pop_front() {
            self.sensor_process(i, frame, injected);
        }
    }

    fn sensor_process(&mut self, i: usize, frame: KemesisWireFrame, injected: bool) {
        let me = NodeId::Sensor(i);
        match self.sensors[i].endpoint.accept(&frame) {
            Ok(d) => {
                let matched = self.check_key(NodeId::Wcc, me, frame.seq_no, &d.key);
                let src = self.note_accept(injected);
                let detail = match d.accepted {
                    Accepted::Refreshed {
                        frame_no,
                        field_no,
                        old,
                        new,
                    } => {
                        self.summary.refreshes_applied += 1;
                        format!("scheme=kemesis seq={} cell={frame_no},{field_no} old={old:#x} value={new:#x} key={} match={matched}{src}", frame.seq_no, d.key)
                    }
                    Accepted::Data(v) => format!(
                        "scheme=kemesis seq={} value={v} key={} match={matched}{src}",
                        frame.seq_no, d.key
                    ),
                };
                self.log(me, EventKind::Commit, detail);
                self.transmit(
                    me,
                    NodeId::Wcc,
                    PacketKind::Ack,
                    d.ack.acked_seq_no,
                    serialize_ack(&d.ack),
                );
            }
            Err(r) => self.reject(me, kemesis_reason(&r), format!("scheme=kemesis seq={}", frame.seq_no)),
        }
    }

    fn sensor_turn(&mut self, i: usize) {
        let me = NodeId::Sensor(i);
        let t = self.slot;
        if !self.sensors[i].endpoint.awake() {
            let since = self.sensors[i].asleep_since.unwrap_or(t);
            if self.cfg.wake_timeout == 0 || t - since < self.cfg.wake_timeout {
                return;
            }
            self.sensors[i].endpoint.wake();
            self.sensors[i].asleep_since = None;
            self.summary.wake_timeouts += 1;
            self.log(me, EventKind::Wake, "by=timeout".into());
            self.drain_queue(i);
            if !self.sensors[i].endpoint.awake() {
                return;
            }
        }
        let (lo, hi) = READING_RANGES[i];
        let reading: u8 = self.readings_rng.random_range(lo..=hi);
        let e = match self.sensors[i].endpoint.emit_data(u16::from(reading)) {
            Ok(e) => e,
            Err(_) => return,
        };
        self.summary.kemesis_data_emitted += 1;
        self.sensors[i].asleep_since = Some(t);
        self.log(
            me,
            EventKind::Emit,
            format!(
                "scheme=kemesis seq={} cell={},{} key={} value={reading}",
                e.wire.seq_no, e.wire.frame_no, e.wire.field_no, e.key
            ),
        );
        self.sent_keys.insert((me, NodeId::Wcc, e.wire.seq_no), e.key.clone());
        let bits = serialize_kemesis(&e.wire, &self.frame_cfg).expect("endpoint output fits the layout");
        self.transmit(me, NodeId::Wcc, PacketKind::Kemesis, e.wire.seq_no, bits);
    }

    fn refresh_turn(&mut self, i: usize) {
        let peer = NodeId::Sensor(i);
        let t = self.slot;
        if let Some(since) = self.links[i].pending_since {
            if t - since >= REFRESH_TIMEOUT {
                let p = self.links[i].endpoint.abandon_refresh().expect("pending tracked");
                self.links[i].pending_since = None;
                self.log(
                    NodeId::Wcc,
                    EventKind::Abandon,
                    format!("link={peer} seq={} cell={},{}", p.seq_no, p.frame_no, p.field_no),
                );
                let diff = self.sensors[i].endpoint.table().diff(self.links[i].endpoint.table());
                if !diff.is_empty() {
                    self.summary.desyncs += 1;
                    let cells: Vec<String> = diff.iter().map(|(a, b)| format!("{a},{b}")).collect();
                    self.log(
                        NodeId::Wcc,
                        EventKind::Desync,
                        format!("link={peer} cells={}", cells.join(";")),
                    );
                }
            }
        }
        if !self.links[i].endpoint.refresh_due() {
            return;
        }
        let e = match self.links[i].endpoint.emit_refresh() {
            Ok(e) => e,
            Err(_) => return,
        };
        self.summary.refreshes_sent += 1;
        self.links[i].pending_since = Some(t);
        self.log(
            NodeId::Wcc,
            EventKind::Refresh,
            format!(
                "link={peer} seq={} cell={},{} key={} value={:#x}",
                e.wire.seq_no, e.wire.frame_no, e.wire.field_no, e.key, e.value
            ),
        );
        self.sent_keys.insert((NodeId::Wcc, peer, e.wire.seq_no), e.key.clone());
        let bits = serialize_kemesis(&e.wire, &self.frame_cfg).expect("endpoint output fits the layout");
        self.transmit(NodeId::Wcc, peer, PacketKind::Kemesis, e.wire.seq_no, bits);
    }

    fn wcc_iamkeys_turn(&mut self) {
        if self.sender.alarmed() {
            return;
        }
        let readings = self.latest.clone();
        let e = match self.sender.emit(self.slot as u32, &readings) {
            Ok(e) => e,
            Err(_) => return,
        };
        self.summary.iamkeys_emitted += 1;
        self.log(
            NodeId::Wcc,
            EventKind::Emit,
            format!(
                "scheme=iamkeys seq={} ts={} readings={} ref={} field={} tone={} key={}",
                e.wire.seq_no,
                e.plaintext.timestamp,
                fmt_readings(&e.plaintext.readings),
                e.wire.ref_frm_seq_no,
                e.wire.field_no,
                e.wire.tone,
                e.keys.k1()
            ),
        );
        self.sent_keys
            .insert((NodeId::Wcc, NodeId::Monitor, e.wire.seq_no), e.keys.k1().clone());
        self.wcc_frames.push(e.plaintext.clone());
        let bits = serialize_iamkeys(&e.wire, &self.frame_cfg).expect("sender output fits the layout");
        self.transmit(NodeId::Wcc, NodeId::Monitor, PacketKind::Iamkeys, e.wire.seq_no, bits);
        if self.sender.alarmed() {
            self.summary.alarms += 1;
            self.log(
                NodeId::Wcc,
                EventKind::Alarm,
                format!("side=sender cause=unacked-frames seq={}", e.wire.seq_no),
            );
        }
    }
}

fn fmt_readings(r: &[u8]) -> String {
    r.iter().map(u8::to_string).collect::<Vec<_>>().join(",")
}

/// Runs a scenario to completion.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<SimReport, SimError> {
    Ok(Simulation::new(cfg.clone())?.run())
}
