//! The deterministic 1 µs event loop binding topology, channel, traffic,
//! access control and decoding.
//!
//! Every tick the loop (1) ends emissions and decodes finished data, drops
//! expired files, admits arrivals, refreshes fading and starts scheduled
//! control emissions; (2) steps every device in ascending id order with the
//! clear-channel decision derived from the previous tick's emissions; and
//! (3) if the emission set changed, updates the running worst SINR of every
//! data emission and re-evaluates sensing. When nothing external is due and
//! every access state machine is merely counting, the clock jumps ahead by
//! the common quiet horizon, which leaves the trajectory unchanged.

use std::hash::{DefaultHasher, Hasher};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{ChannelConfig, LinkGainTable};
use crate::mac::{
    gnb_schedule, transmission_length, CsmaAction, CsmaContext, Grant, LbtAction, LbtContext, MacTiming, SlotClock,
    UplinkMode,
};
use crate::metrics::{TtiCounters, UptRecord};
use crate::phy::{self, EmissionKind, LinearThresholds, SensingConfig, Thresholds, TransmissionEvent};
use crate::scenario::{build_topology, Network, Role, ScenarioConfig, Topology};
use crate::traffic::{
    advance_queues, DeviceQueue, JobState, TrafficModel, DEADLINE_US, DEFAULT_ARRIVAL_RATE, FILE_SIZE_BITS,
};
use crate::units::dbm_to_mw;
use crate::{Error, Result};

/// WiFi PHY rate in bits per µs (Mbps).
pub const WIFI_RATE: f64 = 21.7;
/// NR-U PHY rate in bits per µs (Mbps).
pub const NRU_RATE: f64 = 25.2;
/// Decision interval of the learning agents.
pub const INTERVAL_US: u64 = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub scenario: ScenarioConfig,
    pub channel: ChannelConfig,
    pub timing: MacTiming,
    /// Base thresholds; the ED entries are replaced every interval.
    pub thresholds: Thresholds,
    pub sensing: SensingConfig,
    pub uplink: UplinkMode,
    pub traffic: TrafficModel,
    /// Files per second per terminal.
    pub arrival_rate: f64,
    pub file_bits: f64,
    pub deadline_us: u64,
    pub interval_us: u64,
    /// Arrivals are generated for this many intervals after each reset.
    pub horizon_intervals: u64,
    /// Files queued at every terminal at time zero (full-buffer studies).
    pub initial_backlog: usize,
    pub wifi_rate: f64,
    pub nru_rate: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            channel: ChannelConfig::default(),
            timing: MacTiming::default(),
            thresholds: Thresholds::default(),
            sensing: SensingConfig::default(),
            uplink: UplinkMode::Cat2,
            traffic: TrafficModel::Ftp3,
            arrival_rate: DEFAULT_ARRIVAL_RATE,
            file_bits: FILE_SIZE_BITS,
            deadline_us: DEADLINE_US,
            interval_us: INTERVAL_US,
            horizon_intervals: 2_501,
            initial_backlog: 0,
            wifi_rate: WIFI_RATE,
            nru_rate: NRU_RATE,
        }
    }
}

impl SimConfig {
    pub fn desk() -> Self {
        Self {
            scenario: ScenarioConfig::desk(),
            horizon_intervals: 301,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.interval_us == 0 {
            return Err(Error::Config("interval must be positive".into()));
        }
        if !(self.file_bits > 0.0) || !(self.wifi_rate > 0.0) || !(self.nru_rate > 0.0) {
            return Err(Error::Config("file size and rates must be positive".into()));
        }
        if !(self.arrival_rate > 0.0) {
            return Err(Error::Config(format!("arrival rate must be positive, got {}", self.arrival_rate)));
        }
        let t = &self.timing;
        if t.slot_us == 0 || t.mini_slot_us == 0 || t.txop_us == 0 || t.mcot_us <= t.mini_slot_us {
            return Err(Error::Config("invalid access timing".into()));
        }
        if t.cw_min > t.cw_max {
            return Err(Error::Config("cw_min exceeds cw_max".into()));
        }
        if self.channel.coherence_us == 0 {
            return Err(Error::Config("coherence time must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LinkStats {
    /// Data emissions that ran to completion.
    pub attempts: u64,
    pub decoded: u64,
    pub delivered_bits: f64,
}

impl LinkStats {
    pub fn success_ratio(&self) -> Option<f64> {
        (self.attempts > 0).then(|| self.decoded as f64 / self.attempts as f64)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimStats {
    pub wifi: LinkStats,
    pub nru: LinkStats,
    /// Data emissions that overlapped another data emission at some tick.
    pub overlapping_data: u64,
    /// Emissions cut short by a deadline drop.
    pub aborted: u64,
    /// Uplink grants that lapsed without a PUSCH.
    pub grants_voided: u64,
    /// Airtime per device, µs.
    pub occupancy_us: Vec<u64>,
}

impl SimStats {
    pub fn network(&self, network: Network) -> &LinkStats {
        match network {
            Network::Wifi => &self.wifi,
            Network::Nru => &self.nru,
        }
    }

    fn network_mut(&mut self, network: Network) -> &mut LinkStats {
        match network {
            Network::Wifi => &mut self.wifi,
            Network::Nru => &mut self.nru,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum GnbStage {
    Idle,
    Rs,
    Pdcch,
    AwaitPusch,
    AckAt { start: u64, decoded: bool },
    Ack { decoded: bool },
}

#[derive(Debug, Clone)]
enum Node {
    Sta {
        mac: CsmaContext,
        ap: usize,
    },
    Ap {
        ack_at: Option<u64>,
    },
    Ue {
        lbt: LbtContext,
        gnb: usize,
        grant: Option<Grant>,
        /// The grant's control message has been fully sent.
        armed: bool,
        rs_len: u64,
    },
    Gnb {
        lbt: LbtContext,
        ues: Vec<usize>,
        stage: GnbStage,
    },
}

#[derive(Debug, Clone, Copy)]
struct EmissionMeta {
    bits: f64,
    overlapped: bool,
}

/// The coexistence simulator. The topology and mean gains are fixed at
/// construction; [`reset`](Self::reset) re-seeds traffic, fading and
/// backoff.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: SimConfig,
    topology: Topology,
    gains: LinkGainTable,
    clock: SlotClock,
    fading_rng: ChaCha8Rng,
    backoff_rng: ChaCha8Rng,
    now: u64,
    nodes: Vec<Node>,
    queues: Vec<DeviceQueue>,
    arrivals: Vec<Vec<u64>>,
    arrival_cursor: Vec<usize>,
    active: Vec<TransmissionEvent>,
    meta: Vec<EmissionMeta>,
    emitting: Vec<bool>,
    cca: Vec<bool>,
    thresholds: Thresholds,
    linear: LinearThresholds,
    noise_mw: f64,
    next_refresh: u64,
    counters: TtiCounters,
    interval: u64,
    records: Vec<UptRecord>,
    stats: SimStats,
    hasher: DefaultHasher,
    emissions_changed: bool,
    gains_changed: bool,
}

impl Simulator {
    /// Drops the topology from `topology_seed` and computes its mean gains.
    pub fn new(config: SimConfig, topology_seed: u64) -> Result<Self> {
        config.validate()?;
        let topology = build_topology(&config.scenario, topology_seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(topology_seed);
        rng.set_stream(4);
        let gains = LinkGainTable::build(&topology, &config.channel, &mut rng)?;
        Self::with_gains(config, topology, gains)
    }

    /// Simulator over an explicit topology and gain table (constructed
    /// geometries).
    pub fn with_gains(config: SimConfig, topology: Topology, gains: LinkGainTable) -> Result<Self> {
        config.validate()?;
        if gains.len() != topology.len() {
            return Err(Error::ShapeMismatch {
                expected: topology.len(),
                actual: gains.len(),
            });
        }
        let n = topology.len();
        let mut sim = Self {
            clock: SlotClock::new(config.timing.mini_slot_us as u64),
            thresholds: config.thresholds,
            linear: config.thresholds.linear(),
            noise_mw: dbm_to_mw(config.thresholds.noise_dbm),
            config,
            topology,
            gains,
            fading_rng: ChaCha8Rng::seed_from_u64(0),
            backoff_rng: ChaCha8Rng::seed_from_u64(0),
            now: 0,
            nodes: Vec::new(),
            queues: Vec::new(),
            arrivals: Vec::new(),
            arrival_cursor: Vec::new(),
            active: Vec::new(),
            meta: Vec::new(),
            emitting: vec![false; n],
            cca: vec![true; n],
            next_refresh: 0,
            counters: TtiCounters::new(0),
            interval: 0,
            records: Vec::new(),
            stats: SimStats::default(),
            hasher: DefaultHasher::new(),
            emissions_changed: false,
            gains_changed: false,
        };
        sim.reset(0)?;
        Ok(sim)
    }

    /// Fresh queues, access state and fading; new arrivals from `seed`.
    pub fn reset(&mut self, seed: u64) -> Result<()> {
        let n = self.topology.len();
        let stream = |s: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(s);
            r
        };
        self.fading_rng = stream(1);
        let mut traffic_rng = stream(2);
        self.backoff_rng = stream(3);

        let timing = self.config.timing;
        self.nodes = self
            .topology
            .devices
            .iter()
            .map(|d| match d.role {
                Role::Sta => Node::Sta {
                    mac: CsmaContext::new(timing),
                    ap: d.associated_base.expect("terminals are associated"),
                },
                Role::Ap => Node::Ap { ack_at: None },
                Role::Ue => Node::Ue {
                    lbt: LbtContext::new(timing),
                    gnb: d.associated_base.expect("terminals are associated"),
                    grant: None,
                    armed: false,
                    rs_len: 0,
                },
                Role::Gnb => Node::Gnb {
                    lbt: LbtContext::new(timing),
                    ues: self.topology.terminals_of(d.id),
                    stage: GnbStage::Idle,
                },
            })
            .collect();

        let horizon_s = (self.config.horizon_intervals * self.config.interval_us) as f64 / 1e6;
        self.queues = vec![DeviceQueue::new(); n];
        self.arrivals = vec![Vec::new(); n];
        for d in &self.topology.devices {
            if d.role.is_base() {
                continue;
            }
            for _ in 0..self.config.initial_backlog {
                self.queues[d.id].push_arrival(d.id, self.config.file_bits, 0);
            }
            let times = self.config.traffic.generate(self.config.arrival_rate, horizon_s, &mut traffic_rng)?;
            self.arrivals[d.id] = times.into_iter().map(|t| (t * 1e6).ceil() as u64).collect();
        }
        self.arrival_cursor = vec![0; n];

        self.gains.refresh(&mut self.fading_rng);
        self.now = 0;
        self.active.clear();
        self.meta.clear();
        self.emitting = vec![false; n];
        self.cca = vec![true; n];
        self.next_refresh = self.gains.coherence_us;
        self.interval = 0;
        self.counters = TtiCounters::new(0);
        self.records.clear();
        self.stats = SimStats {
            occupancy_us: vec![0; n],
            ..SimStats::default()
        };
        self.hasher = DefaultHasher::new();
        self.emissions_changed = false;
        self.gains_changed = false;
        Ok(())
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn gains(&self) -> &LinkGainTable {
        &self.gains
    }

    pub fn now_us(&self) -> u64 {
        self.now
    }

    pub fn stats(&self) -> &SimStats {
        &self.stats
    }

    pub fn thresholds(&self) -> Thresholds {
        self.thresholds
    }

    pub fn active_emissions(&self) -> &[TransmissionEvent] {
        &self.active
    }

    pub fn queue(&self, device: usize) -> &DeviceQueue {
        &self.queues[device]
    }

    /// Hash over every emission start so far; equal seeds give equal hashes.
    pub fn trace_hash(&self) -> u64 {
        self.hasher.clone().finish()
    }

    pub fn set_ed_thresholds(&mut self, ed_wifi_dbm: f64, ed_nru_dbm: f64) {
        self.thresholds.ed_wifi_dbm = ed_wifi_dbm;
        self.thresholds.ed_nru_dbm = ed_nru_dbm;
        self.linear = self.thresholds.linear();
        self.recompute_cca();
    }

    /// Runs one decision interval under the given ED thresholds and returns
    /// its counters.
    pub fn step_interval(&mut self, ed_wifi_dbm: f64, ed_nru_dbm: f64) -> TtiCounters {
        self.set_ed_thresholds(ed_wifi_dbm, ed_nru_dbm);
        let end = self.now + self.config.interval_us;
        self.run_until(end);
        self.interval += 1;
        std::mem::replace(&mut self.counters, TtiCounters::new(self.interval))
    }

    /// Per-file records: finished and dropped files plus every file still
    /// queued, evaluated at the current time.
    pub fn upt_records(&self) -> Vec<UptRecord> {
        let mut out = self.records.clone();
        for (id, q) in self.queues.iter().enumerate() {
            let network = self.topology.devices[id].role.network();
            out.extend(q.iter().map(|j| UptRecord::from_job(j, network, self.now)));
        }
        out
    }

    /// Advances the clock to `end` (exclusive of ticks at `end`).
    pub fn run_until(&mut self, end: u64) {
        while self.now < end {
            let forced = self.process_external();
            if !forced {
                let horizon = self.next_external().min(end) - self.now;
                let quiet = (0..self.nodes.len()).map(|i| self.quiescent(i)).min().unwrap_or(u64::MAX);
                let k = horizon.min(quiet);
                if k > 0 {
                    for i in 0..self.nodes.len() {
                        self.advance_node(i, k);
                    }
                    self.now += k;
                    continue;
                }
            }
            for i in 0..self.nodes.len() {
                self.step_node(i);
            }
            if self.emissions_changed || self.gains_changed {
                phy::update_min_sinr(&mut self.active, &|a, b| self.gains.gain(a, b), self.noise_mw);
                let data = self.active.iter().filter(|e| e.kind == EmissionKind::Data).count();
                if data > 1 {
                    for (e, m) in self.active.iter().zip(self.meta.iter_mut()) {
                        if e.kind == EmissionKind::Data {
                            m.overlapped = true;
                        }
                    }
                }
                self.recompute_cca();
                self.emissions_changed = false;
                self.gains_changed = false;
            }
            self.now += 1;
        }
    }

    fn recompute_cca(&mut self) {
        let gains = &self.gains;
        let g = |a: usize, b: usize| gains.gain(a, b);
        for d in &self.topology.devices {
            self.cca[d.id] = phy::cca(d.id, d.role, &self.active, &g, self.config.sensing, &self.linear);
        }
    }

    fn idle(&self, i: usize) -> bool {
        self.cca[i] && !self.emitting[i]
    }

    fn backlogged(&self, i: usize) -> bool {
        self.queues[i].is_backlogged()
    }

    /// Whether a Cat4 procedure at device `i` currently has something to send.
    fn need(&self, i: usize) -> bool {
        match &self.nodes[i] {
            Node::Ue { armed, .. } => {
                self.config.uplink == UplinkMode::Cat4 && *armed && !self.emitting[i] && self.backlogged(i)
            }
            Node::Gnb { ues, stage, .. } => *stage == GnbStage::Idle && ues.iter().any(|&u| self.backlogged(u)),
            Node::Sta { .. } => self.backlogged(i),
            Node::Ap { .. } => false,
        }
    }

    fn quiescent(&self, i: usize) -> u64 {
        let idle = self.idle(i);
        let need = self.need(i);
        match &self.nodes[i] {
            Node::Sta { mac, .. } => mac.quiescent_ticks(idle, need),
            Node::Ap { .. } => u64::MAX,
            Node::Ue { lbt, .. } | Node::Gnb { lbt, .. } => lbt.quiescent_ticks(idle, need),
        }
    }

    fn advance_node(&mut self, i: usize, k: u64) {
        let idle = self.idle(i);
        match &mut self.nodes[i] {
            Node::Sta { mac, .. } => mac.advance(k, idle),
            Node::Ap { .. } => {}
            Node::Ue { lbt, .. } | Node::Gnb { lbt, .. } => lbt.advance(k, idle),
        }
    }

    /// Earliest future tick at which something outside the access state
    /// machines happens.
    fn next_external(&self) -> u64 {
        let mut t = self.next_refresh;
        for e in &self.active {
            t = t.min(e.end_us);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Ap { ack_at: Some(a) } => t = t.min(*a),
                Node::Gnb {
                    stage: GnbStage::AckAt { start, .. },
                    ..
                } => t = t.min(*start),
                Node::Ue {
                    grant: Some(g),
                    armed: true,
                    ..
                } if self.config.uplink == UplinkMode::Cat2 && g.pusch_start > self.now => t = t.min(g.pusch_start),
                _ => {}
            }
            if let Some(&a) = self.arrivals[i].get(self.arrival_cursor[i]) {
                t = t.min(a);
            }
            if let Some(d) = self.queues[i].next_drop_us(self.config.deadline_us) {
                t = t.min(d);
            }
        }
        t.max(self.now + 1)
    }

    fn start_emission(&mut self, ev: TransmissionEvent, bits: f64) {
        let src = ev.source;
        assert!(!self.emitting[src], "device {src} already emitting at {}", self.now);
        assert!(ev.end_us > ev.start_us, "empty emission from device {src}");
        self.hasher.write_u64(ev.start_us);
        self.hasher.write_u64(ev.end_us);
        self.hasher.write_usize(src);
        self.hasher.write_u8(ev.kind as u8);
        self.stats.occupancy_us[src] += ev.end_us - ev.start_us;
        self.emitting[src] = true;
        self.active.push(ev);
        self.meta.push(EmissionMeta {
            bits,
            overlapped: false,
        });
        self.emissions_changed = true;
    }

    fn remove_emission(&mut self, idx: usize) -> (TransmissionEvent, EmissionMeta) {
        let ev = self.active.remove(idx);
        let meta = self.meta.remove(idx);
        self.emitting[ev.source] = false;
        self.emissions_changed = true;
        if ev.kind == EmissionKind::Data && meta.overlapped {
            self.stats.overlapping_data += 1;
        }
        (ev, meta)
    }

    fn emission_of(&self, device: usize) -> Option<usize> {
        self.active.iter().position(|e| e.source == device)
    }

    fn power_dbm(&self, device: usize) -> f64 {
        self.topology.devices[device].tx_power_dbm
    }

    /// Handles everything due at the current tick that is not an access
    /// decision. Returns true if the tick must be stepped individually.
    fn process_external(&mut self) -> bool {
        let now = self.now;
        let mut changed = false;

        if now == self.next_refresh {
            self.gains.refresh(&mut self.fading_rng);
            self.next_refresh += self.gains.coherence_us;
            self.gains_changed = true;
            self.recompute_cca();
            changed = true;
        }

        while let Some(idx) = self.active.iter().position(|e| e.end_us == now) {
            let (ev, meta) = self.remove_emission(idx);
            self.on_emission_end(ev, meta);
            changed = true;
        }

        for i in 0..self.queues.len() {
            let dropped = advance_queues(now, std::slice::from_mut(&mut self.queues[i]), self.config.deadline_us);
            if dropped.is_empty() {
                continue;
            }
            let network = self.topology.devices[i].role.network();
            for job in &dropped {
                self.counters.record_drop(network);
                self.records.push(UptRecord::from_job(job, network, now));
            }
            // Only the head can be in service, and it is always dropped first.
            self.abort_device(i);
            changed = true;
        }

        for i in 0..self.arrivals.len() {
            while let Some(&a) = self.arrivals[i].get(self.arrival_cursor[i]) {
                if a > now {
                    break;
                }
                self.queues[i].push_arrival(i, self.config.file_bits, a);
                self.arrival_cursor[i] += 1;
                changed = true;
            }
        }

        let ack_us = self.config.timing.ack_us as u64;
        for i in 0..self.nodes.len() {
            match self.nodes[i] {
                Node::Ap { ack_at: Some(a) } if a == now => {
                    self.nodes[i] = Node::Ap { ack_at: None };
                    if let Some(idx) = self.emission_of(i) {
                        self.active[idx].end_us = self.active[idx].end_us.max(now + ack_us);
                    } else {
                        let ev = TransmissionEvent::new(i, Role::Ap, self.power_dbm(i), now, now + ack_us, EmissionKind::Ack);
                        self.start_emission(ev, 0.0);
                    }
                    changed = true;
                }
                Node::Gnb {
                    stage: GnbStage::AckAt { start, decoded },
                    ..
                } if start == now => {
                    self.set_gnb_stage(i, GnbStage::Ack { decoded });
                    let ev = TransmissionEvent::new(i, Role::Gnb, self.power_dbm(i), now, now + ack_us, EmissionKind::Ack);
                    self.start_emission(ev, 0.0);
                    changed = true;
                }
                Node::Ue {
                    grant: Some(g),
                    armed: true,
                    ..
                } if self.config.uplink == UplinkMode::Cat2 && g.pusch_start == now => changed = true,
                _ => {}
            }
        }
        changed
    }

    fn set_gnb_stage(&mut self, gnb: usize, new: GnbStage) {
        if let Node::Gnb { stage, .. } = &mut self.nodes[gnb] {
            *stage = new;
        }
    }

    fn on_emission_end(&mut self, ev: TransmissionEvent, meta: EmissionMeta) {
        let now = self.now;
        let i = ev.source;
        match (ev.role, ev.kind) {
            (Role::Sta, EmissionKind::Data) => {
                let decoded = self.finish_data(&ev, meta);
                let sifs = self.config.timing.sifs_us as u64;
                if let Node::Sta { mac, ap } = &mut self.nodes[i] {
                    mac.on_tx_end(decoded);
                    if decoded {
                        let ap = *ap;
                        self.nodes[ap] = Node::Ap { ack_at: Some(now + sifs) };
                    }
                }
            }
            (Role::Ue, EmissionKind::Data) => {
                let decoded = self.finish_data(&ev, meta);
                let gap = self.config.timing.cat1_gap_us as u64;
                let cat4 = self.config.uplink == UplinkMode::Cat4;
                if let Node::Ue {
                    lbt, grant, armed, gnb, ..
                } = &mut self.nodes[i]
                {
                    *grant = None;
                    *armed = false;
                    if cat4 {
                        lbt.on_result(decoded);
                    }
                    let gnb = *gnb;
                    self.set_gnb_stage(
                        gnb,
                        GnbStage::AckAt {
                            start: now + gap,
                            decoded,
                        },
                    );
                }
            }
            (Role::Ue, EmissionKind::Rs) => {
                let rs_len = match &self.nodes[i] {
                    Node::Ue { rs_len, .. } => *rs_len,
                    _ => unreachable!(),
                };
                let budget = (self.config.timing.mcot_us as u64).saturating_sub(rs_len).max(1);
                self.start_data(i, budget);
            }
            (Role::Gnb, EmissionKind::Rs) => self.start_pdcch(i),
            (Role::Gnb, EmissionKind::Pdcch) => {
                self.set_gnb_stage(i, GnbStage::AwaitPusch);
                if let Some(ue) = self.granted_ue(i) {
                    if let Node::Ue { armed, .. } = &mut self.nodes[ue] {
                        *armed = true;
                    }
                }
            }
            (Role::Gnb, EmissionKind::Ack) => {
                if let Node::Gnb { lbt, stage, .. } = &mut self.nodes[i] {
                    let decoded = matches!(*stage, GnbStage::Ack { decoded: true });
                    lbt.on_result(decoded);
                    *stage = GnbStage::Idle;
                }
            }
            _ => {}
        }
    }

    fn granted_ue(&self, gnb: usize) -> Option<usize> {
        match &self.nodes[gnb] {
            Node::Gnb { ues, .. } => ues.iter().copied().find(|&u| matches!(self.nodes[u], Node::Ue { grant: Some(_), .. })),
            _ => None,
        }
    }

    /// Decodes a finished data emission and credits its bits.
    fn finish_data(&mut self, ev: &TransmissionEvent, meta: EmissionMeta) -> bool {
        let network = ev.role.network();
        let decoded = phy::decode(ev.min_sinr_db, self.thresholds.sinr_threshold_db(network));
        let stats = self.stats.network_mut(network);
        stats.attempts += 1;
        if decoded {
            stats.decoded += 1;
            stats.delivered_bits += meta.bits;
            let q = &mut self.queues[ev.source];
            let head = q.head_mut().expect("a transmitting device has a head file");
            if head.serve(meta.bits, self.now) {
                let job = q.pop_done().expect("completed head");
                self.counters.record_completion(network);
                self.records.push(UptRecord::from_job(&job, network, self.now));
            }
        }
        decoded
    }

    fn start_data(&mut self, i: usize, budget_us: u64) {
        let role = self.topology.devices[i].role;
        let rate = match role.network() {
            Network::Wifi => self.config.wifi_rate,
            Network::Nru => self.config.nru_rate,
        };
        let head = self.queues[i].head_mut().expect("data start requires a backlog");
        head.state = JobState::InService;
        let remaining = head.remaining_bits();
        let len = transmission_length(remaining, rate, budget_us)
            .expect("positive budget")
            .max(1);
        let bits = (len as f64 * rate).min(remaining);
        let rx = self.topology.devices[i].associated_base.expect("terminal");
        let ev = TransmissionEvent::new(i, role, self.power_dbm(i), self.now, self.now + len, EmissionKind::Data).to(rx);
        self.start_emission(ev, bits);
    }

    fn start_pdcch(&mut self, gnb: usize) {
        let candidates: Vec<(usize, u64)> = match &self.nodes[gnb] {
            Node::Gnb { ues, .. } => ues
                .iter()
                .filter_map(|&u| self.queues[u].head().map(|j| (u, j.arrival_us)))
                .collect(),
            _ => unreachable!(),
        };
        let grant = gnb_schedule(&candidates, self.config.uplink, &self.clock, self.now, &self.config.timing);
        match grant {
            Some(g) => {
                if let Node::Ue { grant, armed, .. } = &mut self.nodes[g.ue] {
                    *grant = Some(g);
                    *armed = false;
                }
                self.set_gnb_stage(gnb, GnbStage::Pdcch);
                let ev = TransmissionEvent::new(gnb, Role::Gnb, self.power_dbm(gnb), self.now, g.pdcch_end, EmissionKind::Pdcch);
                self.start_emission(ev, 0.0);
            }
            None => {
                if let Node::Gnb { lbt, stage, .. } = &mut self.nodes[gnb] {
                    lbt.abort();
                    *stage = GnbStage::Idle;
                }
            }
        }
    }

    /// Voids the grant held by `ue` and returns its gNB to contention.
    fn void_grant(&mut self, ue: usize) {
        let gnb = match &mut self.nodes[ue] {
            Node::Ue {
                grant, armed, lbt, gnb, ..
            } => {
                if grant.take().is_none() {
                    return;
                }
                *armed = false;
                lbt.abort();
                *gnb
            }
            _ => return,
        };
        self.stats.grants_voided += 1;
        if let Node::Gnb { lbt, stage, .. } = &mut self.nodes[gnb] {
            lbt.abort();
            *stage = GnbStage::Idle;
        }
    }

    /// The head file of device `i` was dropped: cut its ongoing data
    /// emission, if any, without feedback.
    fn abort_device(&mut self, i: usize) {
        let Some(idx) = self.emission_of(i) else { return };
        if !matches!(self.active[idx].kind, EmissionKind::Data | EmissionKind::Rs) || self.topology.devices[i].role.is_base() {
            return;
        }
        let end = self.active[idx].end_us;
        self.remove_emission(idx);
        self.stats.occupancy_us[i] -= end - self.now;
        self.stats.aborted += 1;
        match &mut self.nodes[i] {
            Node::Sta { mac, .. } => mac.abort(),
            Node::Ue { .. } => self.void_grant(i),
            _ => {}
        }
    }

    fn step_node(&mut self, i: usize) {
        enum Effect {
            None,
            Data { budget: u64 },
            Rs { until: u64 },
            Pdcch,
            Void,
        }
        let idle = self.idle(i);
        let need = self.need(i);
        let now = self.now;
        let timing = self.config.timing;
        let backlogged = self.queues[i].is_backlogged();
        let emitting = self.emitting[i];
        let effect = match &mut self.nodes[i] {
            Node::Ap { .. } => Effect::None,
            Node::Sta { mac, .. } => match mac.step(idle, need, &mut self.backoff_rng) {
                CsmaAction::StartTx => Effect::Data {
                    budget: timing.txop_us as u64,
                },
                _ => Effect::None,
            },
            Node::Gnb { lbt, .. } => match lbt.step(idle, need, now, 0, &self.clock, &mut self.backoff_rng) {
                LbtAction::None => Effect::None,
                LbtAction::StartTx => Effect::Pdcch,
                LbtAction::StartRs { until } => Effect::Rs { until },
            },
            Node::Ue {
                lbt, grant, armed, rs_len, ..
            } => {
                let holds = grant.is_some() && *armed;
                let pusch_start = grant.map(|g| g.pusch_start).unwrap_or(0);
                match self.config.uplink {
                    UplinkMode::Cat2 => {
                        lbt.sense(idle);
                        if holds && now == pusch_start {
                            if backlogged && lbt.cat2_ready() {
                                *rs_len = 0;
                                Effect::Data {
                                    budget: timing.mcot_us as u64,
                                }
                            } else {
                                Effect::Void
                            }
                        } else {
                            Effect::None
                        }
                    }
                    UplinkMode::Cat4 => {
                        if holds && !emitting && !backlogged {
                            Effect::Void
                        } else {
                            match lbt.step(idle, need, now, pusch_start, &self.clock, &mut self.backoff_rng) {
                                LbtAction::None => Effect::None,
                                LbtAction::StartTx => {
                                    *rs_len = 0;
                                    Effect::Data {
                                        budget: timing.mcot_us as u64,
                                    }
                                }
                                LbtAction::StartRs { until } => {
                                    *rs_len = until - now;
                                    Effect::Rs { until }
                                }
                            }
                        }
                    }
                }
            }
        };
        match effect {
            Effect::None => {}
            Effect::Data { budget } => self.start_data(i, budget),
            Effect::Pdcch => self.start_pdcch(i),
            Effect::Void => self.void_grant(i),
            Effect::Rs { until } => {
                let role = self.topology.devices[i].role;
                if role == Role::Gnb {
                    self.set_gnb_stage(i, GnbStage::Rs);
                }
                let ev = TransmissionEvent::new(i, role, self.power_dbm(i), now, until, EmissionKind::Rs);
                self.start_emission(ev, 0.0);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk(seed: u64) -> Simulator {
        Simulator::new(SimConfig::desk(), seed).unwrap()
    }

    #[test]
    fn same_seed_same_trajectory() {
        let mut a = desk(7);
        let mut b = desk(7);
        a.reset(3).unwrap();
        b.reset(3).unwrap();
        for k in 0..20 {
            let ed = -82.0 + (k % 11) as f64 * 3.0;
            assert_eq!(a.step_interval(ed, -72.0), b.step_interval(ed, -72.0));
        }
        assert_eq!(a.trace_hash(), b.trace_hash());
        assert_eq!(a.stats(), b.stats());
    }

    #[test]
    fn different_episode_seeds_diverge() {
        let mut a = desk(7);
        let mut b = desk(7);
        a.reset(1).unwrap();
        b.reset(2).unwrap();
        for _ in 0..20 {
            a.step_interval(-62.0, -72.0);
            b.step_interval(-62.0, -72.0);
        }
        assert_ne!(a.trace_hash(), b.trace_hash());
    }

    #[test]
    fn no_traffic_means_silence() {
        let config = SimConfig {
            horizon_intervals: 0,
            ..SimConfig::desk()
        };
        let mut sim = Simulator::new(config, 1).unwrap();
        for _ in 0..10 {
            let c = sim.step_interval(-62.0, -72.0);
            assert_eq!((c.n_wifi, c.n_nru), (0, 0));
        }
        assert_eq!(sim.trace_hash(), DefaultHasher::new().finish());
        assert!(sim.stats().occupancy_us.iter().all(|&o| o == 0));
        assert_eq!(sim.now_us(), 1_000_000);
    }

    #[test]
    fn occupancy_never_exceeds_elapsed_time() {
        let mut sim = desk(11);
        sim.reset(5).unwrap();
        for _ in 0..30 {
            sim.step_interval(-52.0, -52.0);
            assert!(sim.active_emissions().len() <= sim.topology().len());
        }
        for &o in &sim.stats().occupancy_us {
            assert!(o <= sim.now_us() + 6_000);
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let mut c = SimConfig::desk();
        c.interval_us = 0;
        assert!(Simulator::new(c, 0).is_err());
        let mut c = SimConfig::desk();
        c.arrival_rate = 0.0;
        assert!(Simulator::new(c, 0).is_err());
    }
}
