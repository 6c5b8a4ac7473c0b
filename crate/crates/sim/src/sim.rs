//! Discrete-event run of the full protocol stack on a ring road.
//!
//! The road `[0, L)` wraps around and is split into one cell per RSU; a
//! vehicle associates with the RSU of the cell it is in and hands over when it
//! crosses a cell boundary. Radio reach is still checked against the
//! configured ranges. Every cell has one shared FIFO air channel; RSUs talk to
//! each other over a wired link. Computation is charged from the analytic
//! primitive timings on a per-node FIFO CPU.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use vanet_gka::auth::{AuthState, HelloOutcome, RsuAuth, VehicleAuth};
use vanet_gka::codec::WireMessage;
use vanet_gka::comm::{self, Directory};
use vanet_gka::cost::{average_delay, DelaySample, PrimitiveTimings};
use vanet_gka::crypto::{ChannelKeys, GElem, Group};
use vanet_gka::gka::run_agreement;
use vanet_gka::group_key::{GroupState, MemberState, NeighborGkStore};
use vanet_gka::params::SystemParams;
use vanet_gka::ta::{refresh_vehicle_epoch, Beacon, Location, NodeCredentials, Pseudonym, TaState, VehicleEpoch};

use crate::config::{ConfigError, ScenarioConfig};

type Ns = u64;

fn ns(ms: f64) -> Ns {
    (ms * 1e6).round() as Ns
}

fn ms(t: Ns) -> f64 {
    t as f64 / 1e6
}

/// A vehicle stuck mid-handshake this long restarts at the next beacon.
const STALL_MS: f64 = 2000.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("scenario setup failed: {0}")]
    Setup(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Node {
    Vehicle(usize),
    Rsu(usize),
}

#[derive(Clone, Debug)]
pub enum Timer {
    /// Sender CPU finished building a message; it goes on the air now.
    Transmit { msg: usize },
    /// Receiver CPU finished verifying a delivered message.
    Process { msg: usize, to: Node },
    LeaveOld { vehicle: usize, rsu: usize, gen: u64 },
}

#[derive(Clone, Debug)]
pub enum EventKind {
    Beacon { rsu: usize },
    VehicleEnterRange { vehicle: usize, rsu: usize },
    MessageDelivery { msg: usize, to: Node },
    ProtocolTimer(Timer),
    VehicleBroadcast { vehicle: usize },
}

#[derive(Clone, Debug)]
pub struct SimEvent {
    pub time_ns: u64,
    pub seq: u64,
    pub kind: EventKind,
}

impl PartialEq for SimEvent {
    fn eq(&self, other: &Self) -> bool {
        (self.time_ns, self.seq) == (other.time_ns, other.seq)
    }
}

impl Eq for SimEvent {}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimEvent {
    // Reversed: the heap pops the earliest (time, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time_ns, other.seq).cmp(&(self.time_ns, self.seq))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VehicleStats {
    pub illegal: bool,
    /// Handshakes started, one per RSU range entered.
    pub entries: u64,
    pub admissions: u64,
    pub full_auths: u64,
    pub fast_auths: u64,
    /// Entries where the offered neighbour key no longer matched.
    pub invalidated: u64,
    pub retries: u64,
    /// Entries given up before admission.
    pub abandoned: u64,
    /// Start of a handshake still open when the run ended.
    pub pending_since_ms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_vehicles: usize,
    pub rng_seed: u64,
    pub average_delay_ms: Option<f64>,
    /// Sum of per-message overhead over OBU→RSU messages.
    pub total_overhead_bytes: u64,
    pub obu_to_rsu_messages: u64,
    /// OBU→RSU messages whose overhead differs from 58 bytes.
    pub overhead_exceptions: u64,
    pub auth_count: u64,
    pub fastpath_count: u64,
    pub rekey_count: u64,
    pub failed_auths: u64,
    pub rekey_invalidated: u64,
    /// Deliveries a receiver could not open with its current keys.
    pub stale_drops: u64,
    pub out_of_range: u64,
    pub messages_sent: u64,
    pub deliveries: u64,
    pub delay_samples: u64,
    pub events: u64,
    pub messages_by_type: BTreeMap<String, u64>,
    pub overhead_by_type: BTreeMap<String, u64>,
    pub vehicles: Vec<VehicleStats>,
    /// SHA-256 over the processed event trace.
    pub trace_digest: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stage {
    AwaitBeacon,
    HelloSent,
    ConfirmSent,
    OfferSent,
}

struct Pending {
    rsu: usize,
    epoch: VehicleEpoch,
    auth: Option<VehicleAuth>,
    member: Option<(MemberState, ChannelKeys)>,
    stage: Stage,
    since: Ns,
    entered: Ns,
    offered_gk: bool,
}

struct Membership {
    member: MemberState,
    keys: ChannelKeys,
    directory: Option<Directory>,
    leave_gen: u64,
}

struct Vehicle {
    creds: NodeCredentials,
    illegal: bool,
    x0: f64,
    rng: ChaCha8Rng,
    cpu_free: Ns,
    pending: Option<Pending>,
    queued: Option<usize>,
    groups: BTreeMap<usize, Membership>,
    current: Option<usize>,
    tried: Vec<usize>,
    counter: u64,
    stats: VehicleStats,
}

struct Rsu {
    tid: Vec<u8>,
    pos: f64,
    beacon: Beacon,
    auth: RsuAuth,
    group: GroupState,
    store: NeighborGkStore,
    members: BTreeMap<Pseudonym, usize>,
    neighbors: Vec<usize>,
    sk: Option<GElem>,
    cpu_free: Ns,
    directory_active: bool,
}

struct Sent {
    bytes: Vec<u8>,
    sender: Node,
    origin: Ns,
    ready: Ns,
    arrival: Ns,
    /// Addressee of a peer message.
    peer: Option<usize>,
    to: Vec<Node>,
    wired: bool,
    /// Group a vehicle's data message was sealed for.
    group: Option<usize>,
}

#[derive(Default)]
struct Counters {
    total_overhead: u64,
    obu_to_rsu: u64,
    overhead_exceptions: u64,
    auth: u64,
    fastpath: u64,
    rekey: u64,
    failed_auths: u64,
    invalidated: u64,
    stale: u64,
    out_of_range: u64,
    sent: u64,
    deliveries: u64,
    events: u64,
    by_type: BTreeMap<String, u64>,
    overhead_by_type: BTreeMap<String, u64>,
}

struct Sim {
    cfg: ScenarioConfig,
    t: PrimitiveTimings,
    g: Arc<Group>,
    params: SystemParams,
    rng: ChaCha20Rng,
    queue: BinaryHeap<SimEvent>,
    seq: u64,
    now: Ns,
    cell_w: f64,
    vehicles: Vec<Vehicle>,
    rsus: Vec<Rsu>,
    air_free: Vec<Ns>,
    messages: Vec<Sent>,
    samples: Vec<DelaySample>,
    c: Counters,
    trace: Sha256,
    trace_log: bool,
}

/// Runs one scenario to completion.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<MetricsReport, SimError> {
    cfg.validate()?;
    let mut sim = Sim::new(cfg.clone())?;
    sim.run();
    Ok(sim.report())
}

fn setup_err(e: impl std::fmt::Display) -> SimError {
    SimError::Setup(e.to_string())
}

impl Sim {
    fn new(cfg: ScenarioConfig) -> Result<Self, SimError> {
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.rng_seed);
        let mut ta = TaState::init(cfg.profile, &mut rng).map_err(setup_err)?;
        let params = ta.params().clone();
        let g = params.group.clone();
        let n_rsus = cfg.n_rsus;
        let cell_w = cfg.road_length_m / n_rsus as f64;

        let mut rsus = Vec::with_capacity(n_rsus);
        for k in 0..n_rsus {
            let tid = format!("RSU-{k}").into_bytes();
            let pos = (k as f64 + 0.5) * cell_w;
            let (creds, beacon) = ta
                .register_rsu(&tid, Location::from_meters(pos, 0.0), &mut rng)
                .map_err(setup_err)?;
            let auth = RsuAuth::new(params.clone(), creds.clone(), cfg.delta_max_ms).map_err(setup_err)?;
            let mut neighbors: Vec<usize> = [(k + 1) % n_rsus, (k + n_rsus - 1) % n_rsus]
                .into_iter()
                .filter(|&j| j != k)
                .collect();
            neighbors.dedup();
            rsus.push((creds, Rsu {
                tid,
                pos,
                beacon,
                auth,
                group: GroupState::new(),
                store: NeighborGkStore::new(),
                members: BTreeMap::new(),
                neighbors,
                sk: None,
                cpu_free: 0,
                directory_active: false,
            }));
        }
        if cfg.gk_transfer && n_rsus >= 2 {
            let members: Vec<(Vec<u8>, _)> = rsus
                .iter()
                .map(|(c, _)| (c.tid.clone(), c.keypair.as_ref().expect("RSU key pair").sk.clone()))
                .collect();
            let run = run_agreement(&g, &members, &mut rng).map_err(setup_err)?;
            for (_, r) in rsus.iter_mut() {
                r.sk = run.keys.get(&r.tid).cloned();
            }
        }
        let rsus: Vec<Rsu> = rsus.into_iter().map(|(_, r)| r).collect();

        let mut vehicles = Vec::with_capacity(cfg.n_vehicles);
        for i in 0..cfg.n_vehicles {
            // Per-vehicle stream: vehicle i draws the same numbers at any density.
            let mut vr = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            vr.set_stream(i as u64 + 1);
            let x0 = vr.gen_range(0.0..cfg.road_length_m);
            let illegal = vr.gen_bool(cfg.illegal_fraction);
            let mut creds = ta.register_vehicle(format!("CAR-{i}").as_bytes()).map_err(setup_err)?;
            if illegal {
                creds.s_u = g.random_g1(&mut rng);
            }
            vehicles.push(Vehicle {
                creds,
                illegal,
                x0,
                rng: vr,
                cpu_free: 0,
                pending: None,
                queued: None,
                groups: BTreeMap::new(),
                current: None,
                tried: Vec::new(),
                counter: 0,
                stats: VehicleStats {
                    illegal,
                    ..Default::default()
                },
            });
        }

        let trace_log = std::env::var("SIM_LOG").map(|v| v == "trace").unwrap_or(false);
        let mut sim = Sim {
            t: cfg.timings,
            air_free: vec![0; n_rsus],
            cfg,
            g,
            params,
            rng,
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0,
            cell_w,
            vehicles,
            rsus,
            messages: Vec::new(),
            samples: Vec::new(),
            c: Counters::default(),
            trace: Sha256::new(),
            trace_log,
        };
        sim.schedule_initial();
        Ok(sim)
    }

    fn schedule_initial(&mut self) {
        let mut phases = ChaCha8Rng::seed_from_u64(self.cfg.rng_seed);
        phases.set_stream(0);
        for k in 0..self.rsus.len() {
            let phase = phases.gen_range(0.0..self.cfg.beacon_interval_ms);
            self.push(ns(phase), EventKind::Beacon { rsu: k });
        }
        let interval = self.cfg.broadcast_interval_ms;
        let v = self.cfg.vehicle_speed_mps;
        let end_s = self.cfg.sim_time_s;
        for i in 0..self.vehicles.len() {
            let x0 = self.vehicles[i].x0;
            let first = self.vehicles[i].rng.gen_range(0.0..interval);
            let cell = self.cell_of(x0);
            self.push(0, EventKind::VehicleEnterRange { vehicle: i, rsu: cell });
            self.push(ns(first), EventKind::VehicleBroadcast { vehicle: i });
            if self.rsus.len() < 2 || v <= 0.0 {
                continue;
            }
            // Boundary crossings for the whole run.
            let mut dist = self.cell_w - x0.rem_euclid(self.cell_w);
            let mut next_cell = (cell + 1) % self.rsus.len();
            while dist / v <= end_s {
                self.push(ns(dist / v * 1000.0), EventKind::VehicleEnterRange { vehicle: i, rsu: next_cell });
                dist += self.cell_w;
                next_cell = (next_cell + 1) % self.rsus.len();
            }
        }
    }

    fn push(&mut self, time_ns: Ns, kind: EventKind) {
        self.seq += 1;
        self.queue.push(SimEvent {
            time_ns,
            seq: self.seq,
            kind,
        });
    }

    fn run(&mut self) {
        let end = ns(self.cfg.sim_time_s * 1000.0);
        while let Some(ev) = self.queue.pop() {
            if ev.time_ns > end {
                break;
            }
            self.now = ev.time_ns;
            self.c.events += 1;
            let line = format!("{} {} {:?}\n", ev.time_ns, ev.seq, ev.kind);
            self.trace.update(line.as_bytes());
            if self.trace_log {
                eprint!("{line}");
            }
            match ev.kind {
                EventKind::Beacon { rsu } => self.on_beacon(rsu),
                EventKind::VehicleEnterRange { vehicle, rsu } => self.on_enter(vehicle, rsu),
                EventKind::MessageDelivery { msg, to } => self.on_delivery(msg, to),
                EventKind::ProtocolTimer(Timer::Transmit { msg }) => self.on_transmit(msg),
                EventKind::ProtocolTimer(Timer::Process { msg, to }) => self.on_process(msg, to),
                EventKind::ProtocolTimer(Timer::LeaveOld { vehicle, rsu, gen }) => self.on_leave(vehicle, rsu, gen),
                EventKind::VehicleBroadcast { vehicle } => self.on_tick(vehicle),
            }
        }
    }

    // ---- geometry ----

    fn pos(&self, n: Node, t: Ns) -> f64 {
        match n {
            Node::Rsu(k) => self.rsus[k].pos,
            Node::Vehicle(i) => {
                (self.vehicles[i].x0 + self.cfg.vehicle_speed_mps * ms(t) / 1000.0).rem_euclid(self.cfg.road_length_m)
            }
        }
    }

    fn cell_of(&self, x: f64) -> usize {
        ((x / self.cell_w) as usize).min(self.rsus.len() - 1)
    }

    fn in_range(&self, a: Node, b: Node, t: Ns) -> bool {
        let l = self.cfg.road_length_m;
        let d = (self.pos(a, t) - self.pos(b, t)).abs().rem_euclid(l);
        let d = d.min(l - d);
        let reach = match (a, b) {
            (Node::Vehicle(_), Node::Vehicle(_)) => self.cfg.vehicle_range_m,
            _ => self.cfg.rsu_range_m,
        };
        d <= reach
    }

    fn node_id(&self, n: Node) -> u64 {
        match n {
            Node::Vehicle(i) => i as u64,
            Node::Rsu(k) => (self.vehicles.len() + k) as u64,
        }
    }

    fn cpu(&mut self, n: Node) -> &mut Ns {
        match n {
            Node::Vehicle(i) => &mut self.vehicles[i].cpu_free,
            Node::Rsu(k) => &mut self.rsus[k].cpu_free,
        }
    }

    // ---- cost model ----

    fn hs(&self) -> f64 {
        self.t.t_hmac + self.t.t_sym
    }

    fn verify_cost(&self, msg: &WireMessage, addressee: bool) -> f64 {
        let t = &self.t;
        match msg {
            WireMessage::Beacon(_) => 2.0 * t.t_mul,
            WireMessage::Confirm(_) => 2.0 * t.t_mul + 2.0 * t.t_par,
            WireMessage::Pag2(_) | WireMessage::Bm1(_) => self.hs() + t.t_mul,
            WireMessage::Word3(_) if addressee => 2.0 * self.hs() + t.t_mul,
            _ => self.hs(),
        }
    }

    // ---- transport ----

    /// Charges creation on the sender CPU; the message is transmitted once
    /// the CPU is done with it.
    fn send(&mut self, from: Node, create_ms: f64, msg: WireMessage, to: Vec<Node>, peer: Option<usize>, wired: bool) {
        let origin = self.now;
        let cpu = self.cpu(from);
        let ready = (*cpu).max(origin) + ns(create_ms);
        *cpu = ready;

        let name = msg.name().to_string();
        *self.c.by_type.entry(name.clone()).or_default() += 1;
        self.c.sent += 1;
        if msg.is_obu_to_rsu() {
            let o = msg.measure_overhead() as u64;
            self.c.obu_to_rsu += 1;
            self.c.total_overhead += o;
            *self.c.overhead_by_type.entry(name).or_default() += o;
            if o != 58 {
                self.c.overhead_exceptions += 1;
            }
        }

        let idx = self.messages.len();
        self.messages.push(Sent {
            bytes: msg.encode(&self.g),
            sender: from,
            origin,
            ready,
            arrival: ready,
            peer,
            to,
            wired,
            group: None,
        });
        self.push(ready, EventKind::ProtocolTimer(Timer::Transmit { msg: idx }));
    }

    /// Puts a ready message on the cell's FIFO air channel (or the wired
    /// backbone) towards every receiver still in reach.
    fn on_transmit(&mut self, idx: usize) {
        let now = self.now;
        let (from, wired, len) = {
            let m = &self.messages[idx];
            (m.sender, m.wired, m.bytes.len())
        };
        let arrival = if wired {
            now + ns(self.cfg.wired_latency_ms)
        } else {
            let cell = match from {
                Node::Rsu(k) => k,
                Node::Vehicle(_) => self.cell_of(self.pos(from, now)),
            };
            // bytes·8 / (Mbit/s) is microseconds.
            let tx = ns(len as f64 * 8.0 / self.cfg.bandwidth_mbps / 1000.0);
            let start = self.air_free[cell].max(now);
            self.air_free[cell] = start + tx;
            start + tx + ns(self.cfg.propagation_us / 1000.0)
        };
        self.messages[idx].arrival = arrival;
        for r in std::mem::take(&mut self.messages[idx].to) {
            if !wired && !self.in_range(from, r, now) {
                self.c.out_of_range += 1;
                continue;
            }
            self.push(arrival, EventKind::MessageDelivery { msg: idx, to: r });
        }
    }

    fn on_delivery(&mut self, msg: usize, to: Node) {
        self.c.deliveries += 1;
        let wire = match WireMessage::decode(&self.g, &self.messages[msg].bytes) {
            Ok(w) => w,
            Err(_) => return,
        };
        let addressee = matches!(to, Node::Vehicle(i) if self.messages[msg].peer == Some(i));
        let cost = self.verify_cost(&wire, addressee);
        let now = self.now;
        let cpu = self.cpu(to);
        let done = (*cpu).max(now) + ns(cost);
        *cpu = done;
        self.push(done, EventKind::ProtocolTimer(Timer::Process { msg, to }));
    }

    fn sample(&mut self, msg: usize, to: Node) {
        let m = &self.messages[msg];
        let Node::Vehicle(creator) = m.sender else { return };
        self.samples.push(DelaySample {
            creator: creator as u64,
            message: msg as u64,
            receiver: self.node_id(to),
            t_create: ms(m.ready - m.origin),
            t_transmit: ms(m.arrival - m.ready),
            t_verify: ms(self.now - m.arrival),
        });
    }

    // ---- mobility and handshakes ----

    fn on_enter(&mut self, v: usize, rsu: usize) {
        if let Some(p) = &self.vehicles[v].pending {
            if p.rsu == rsu {
                return;
            }
            let legal = !self.vehicles[v].illegal;
            if legal && self.in_range(Node::Vehicle(v), Node::Rsu(p.rsu), self.now) {
                // Finish with the previous RSU first; it is still in reach.
                self.vehicles[v].queued = Some(rsu);
                return;
            }
            self.vehicles[v].stats.abandoned += 1;
            self.vehicles[v].pending = None;
        }
        self.start_entry(v, rsu);
    }

    fn start_entry(&mut self, v: usize, rsu: usize) {
        let veh = &mut self.vehicles[v];
        veh.queued = None;
        if let Some(m) = veh.groups.get_mut(&rsu) {
            // Back in a range whose group we never left.
            m.leave_gen += 1;
            veh.current = Some(rsu);
            return;
        }
        if veh.illegal && veh.tried.contains(&rsu) {
            return;
        }
        veh.tried.push(rsu);
        veh.stats.entries += 1;
        let epoch = match refresh_vehicle_epoch(&veh.creds, &self.params, &mut self.rng) {
            Ok(e) => e,
            Err(_) => return,
        };
        veh.pending = Some(Pending {
            rsu,
            epoch,
            auth: None,
            member: None,
            stage: Stage::AwaitBeacon,
            since: self.now,
            entered: self.now,
            offered_gk: false,
        });
    }

    fn wants_beacon(&self, v: usize, rsu: usize) -> bool {
        let veh = &self.vehicles[v];
        match &veh.pending {
            Some(p) if p.rsu == rsu => {
                p.stage == Stage::AwaitBeacon || (!veh.illegal && self.now - p.since > ns(STALL_MS))
            }
            _ => false,
        }
    }

    fn on_beacon(&mut self, k: usize) {
        self.push(self.now + ns(self.cfg.beacon_interval_ms), EventKind::Beacon { rsu: k });
        let to: Vec<Node> = (0..self.vehicles.len())
            .filter(|&v| self.wants_beacon(v, k))
            .map(Node::Vehicle)
            .collect();
        if to.is_empty() {
            return;
        }
        let b = WireMessage::Beacon(self.rsus[k].beacon.clone());
        self.send(Node::Rsu(k), 0.0, b, to, None, false);
    }

    fn on_process(&mut self, msg: usize, to: Node) {
        let wire = match WireMessage::decode(&self.g, &self.messages[msg].bytes) {
            Ok(w) => w,
            Err(_) => return,
        };
        let from = self.messages[msg].sender;
        match (to, from) {
            (Node::Vehicle(v), Node::Rsu(k)) => self.vehicle_from_rsu(v, k, wire),
            (Node::Vehicle(v), Node::Vehicle(_)) => self.vehicle_from_vehicle(v, msg, wire),
            (Node::Rsu(k), Node::Vehicle(v)) => self.rsu_from_vehicle(k, v, msg, wire),
            (Node::Rsu(k), Node::Rsu(_)) => {
                if let (WireMessage::GkTransfer(t), Some(sk)) = (&wire, self.rsus[k].sk.clone()) {
                    let _ = self.rsus[k].store.receive(&self.g, t, &sk);
                }
            }
        }
    }

    fn vehicle_from_rsu(&mut self, v: usize, k: usize, wire: WireMessage) {
        let g = self.g.clone();
        let now_ms = self.now / 1_000_000;
        match wire {
            WireMessage::Beacon(b) => {
                if !self.wants_beacon(v, k) {
                    return;
                }
                let neighbor_gk = {
                    let veh = &self.vehicles[v];
                    veh.current
                        .filter(|&c| c != k)
                        .and_then(|c| veh.groups.get(&c))
                        .and_then(|m| m.member.gk().cloned())
                };
                let now = self.now;
                let veh = &mut self.vehicles[v];
                let p = veh.pending.as_mut().expect("checked by wants_beacon");
                if p.stage != Stage::AwaitBeacon {
                    veh.stats.retries += 1;
                    match refresh_vehicle_epoch(&veh.creds, &self.params, &mut self.rng) {
                        Ok(e) => p.epoch = e,
                        Err(_) => return,
                    }
                }
                let mut auth = match VehicleAuth::from_beacon(&self.params, &b) {
                    Ok(a) => a,
                    Err(_) => return,
                };
                let Ok(hello) = auth.hello(&p.epoch, neighbor_gk.as_ref(), now_ms, &mut self.rng) else {
                    return;
                };
                p.auth = Some(auth);
                p.stage = Stage::HelloSent;
                p.since = now;
                p.offered_gk = neighbor_gk.is_some();
                let cost = self.t.t_mp + self.t.t_mul;
                self.send(Node::Vehicle(v), cost, hello, vec![Node::Rsu(k)], None, false);
            }
            WireMessage::Challenge(m3) => {
                let creds = self.vehicles[v].creds.clone();
                let veh = &mut self.vehicles[v];
                let Some(p) = veh.pending.as_mut().filter(|p| p.rsu == k && p.stage == Stage::HelloSent) else {
                    return;
                };
                if p.offered_gk {
                    p.offered_gk = false;
                    veh.stats.invalidated += 1;
                    self.c.invalidated += 1;
                }
                let Ok(m4) = p.auth.as_mut().expect("hello sent").confirm(&creds, &m3, &mut self.rng) else {
                    return;
                };
                p.stage = Stage::ConfirmSent;
                let cost = 2.0 * self.t.t_mul + 2.0 * self.t.t_par;
                self.send(Node::Vehicle(v), cost, m4, vec![Node::Rsu(k)], None, false);
            }
            WireMessage::AuthAccept(acc) => {
                let Some(p) = self.vehicles[v].pending.as_mut().filter(|p| p.rsu == k) else {
                    return;
                };
                let auth = p.auth.as_mut().expect("hello sent");
                if auth.accept(&acc).is_err() {
                    return;
                }
                let Ok(member) = MemberState::from_auth(&g, auth, &mut self.rng) else {
                    return;
                };
                let keys = auth.channel().expect("authenticated").clone();
                let offer = member.offer(&g, &mut self.rng);
                p.member = Some((member, keys));
                p.stage = Stage::OfferSent;
                let cost = self.t.t_mul + self.hs();
                self.send(Node::Vehicle(v), cost, offer, vec![Node::Rsu(k)], None, false);
            }
            WireMessage::Pag2(p2) => self.on_pag2(v, k, &p2),
            WireMessage::Pag3(p3) => match self.vehicles[v].groups.get_mut(&k) {
                Some(m) if m.member.epoch() < p3.epoch => {
                    if m.member.apply_pag3(&g, &p3).is_err() {
                        self.c.stale += 1;
                    }
                }
                _ => {}
            },
            WireMessage::Bm1(b) => match self.vehicles[v].groups.get_mut(&k) {
                Some(m) if m.member.epoch() < b.epoch => {
                    if m.member.apply_bm1(&g, &b).is_err() {
                        self.c.stale += 1;
                    }
                }
                _ => {}
            },
            WireMessage::Word2(w2) => {
                if let Some(m) = self.vehicles[v].groups.get_mut(&k) {
                    if let Some(gk) = m.member.gk() {
                        match comm::open_directory(&g, gk, &w2) {
                            Ok(d) if d.epoch == m.member.epoch() => m.directory = Some(d),
                            Ok(_) => {}
                            Err(_) => self.c.stale += 1,
                        }
                    }
                }
            }
            _ => {}
        }
    }

    fn on_pag2(&mut self, v: usize, k: usize, p2: &vanet_gka::codec::FidSealedMsg) {
        let g = self.g.clone();
        let veh = &mut self.vehicles[v];
        let Some(p) = veh.pending.as_mut().filter(|p| p.rsu == k && p.stage == Stage::OfferSent) else {
            return;
        };
        let (mut member, keys) = p.member.take().expect("offer sent");
        if member.apply_pag2(&g, p2).is_err() {
            p.member = Some((member, keys));
            return;
        }
        let fast = p.auth.as_ref().map(|a| a.state()) == Some(AuthState::FastPathDone);
        veh.pending = None;
        veh.stats.admissions += 1;
        if fast {
            veh.stats.fast_auths += 1;
            self.c.fastpath += 1;
        } else {
            veh.stats.full_auths += 1;
            self.c.auth += 1;
        }
        veh.groups.insert(
            k,
            Membership {
                member,
                keys,
                directory: None,
                leave_gen: 0,
            },
        );
        let previous = veh.current.replace(k).filter(|&c| c != k);
        let leave = previous.and_then(|old| {
            let m = veh.groups.get_mut(&old)?;
            m.leave_gen += 1;
            Some((old, m.leave_gen))
        });
        if let Some((old, gen)) = leave {
            self.push(
                self.now + ns(self.cfg.leave_delay_ms),
                EventKind::ProtocolTimer(Timer::LeaveOld { vehicle: v, rsu: old, gen }),
            );
        }
        if let Some(next) = self.vehicles[v].queued.take() {
            self.start_entry(v, next);
        }
    }

    fn on_leave(&mut self, v: usize, k: usize, gen: u64) {
        let veh = &mut self.vehicles[v];
        match veh.groups.get(&k) {
            Some(m) if m.leave_gen == gen && veh.current != Some(k) => {}
            _ => return,
        }
        let fid = *veh.groups.remove(&k).expect("checked").member.fid();
        let g = self.g.clone();
        let rsu = &mut self.rsus[k];
        rsu.members.remove(&fid);
        rsu.auth.remove(&fid);
        let remaining = rsu.group.len().saturating_sub(1);
        let Ok(out) = rsu.group.handle_leave(&g, &fid, &mut self.rng) else {
            return;
        };
        self.c.rekey += 1;
        if let Some(bm1) = out.bm1 {
            let to = self.member_nodes(k, None);
            let cost = (remaining as f64 + 1.0) * self.t.t_mul + self.hs();
            self.send(Node::Rsu(k), cost, bm1, to, None, false);
        }
        self.on_gk_change(k);
    }

    fn member_nodes(&self, k: usize, except: Option<usize>) -> Vec<Node> {
        self.rsus[k]
            .members
            .values()
            .filter(|&&i| Some(i) != except)
            .map(|&i| Node::Vehicle(i))
            .collect()
    }

    fn on_gk_change(&mut self, k: usize) {
        let g = self.g.clone();
        if let Some(sk) = self.rsus[k].sk.clone() {
            for j in self.rsus[k].neighbors.clone() {
                let r = &self.rsus[k];
                if let Ok(t) = r.group.transfer_gk(&g, &r.tid.clone(), &sk, &mut self.rng) {
                    let cost = self.hs();
                    self.send(Node::Rsu(k), cost, t, vec![Node::Rsu(j)], None, true);
                }
            }
        }
        if self.rsus[k].directory_active {
            self.serve_directory(k);
        }
    }

    fn serve_directory(&mut self, k: usize) {
        let g = self.g.clone();
        if let Ok(w2) = comm::serve_directory(&g, &self.rsus[k].group, &mut self.rng) {
            let to = self.member_nodes(k, None);
            let cost = self.hs();
            self.send(Node::Rsu(k), cost, w2, to, None, false);
        }
    }

    fn rsu_from_vehicle(&mut self, k: usize, v: usize, msg: usize, wire: WireMessage) {
        let g = self.g.clone();
        let now_ms = self.now / 1_000_000;
        match wire {
            WireMessage::Hello(h) => {
                let rsu = &mut self.rsus[k];
                let gks: Vec<GElem> = rsu.store.keys().cloned().collect();
                match rsu.auth.process_hello(&h, now_ms, gks.iter(), &mut self.rng) {
                    Ok(HelloOutcome::FastPath { reply, .. }) => {
                        self.sample(msg, Node::Rsu(k));
                        let cost = self.t.t_hmac;
                        self.send(Node::Rsu(k), cost, reply, vec![Node::Vehicle(v)], None, false);
                    }
                    Ok(HelloOutcome::Challenge { reply, .. }) => {
                        self.sample(msg, Node::Rsu(k));
                        let cost = 2.0 * self.t.t_mul;
                        self.send(Node::Rsu(k), cost, reply, vec![Node::Vehicle(v)], None, false);
                    }
                    Err(_) => self.c.failed_auths += 1,
                }
            }
            WireMessage::Confirm(m4) => match self.rsus[k].auth.process_confirm(&m4, &mut self.rng) {
                Ok(acc) => {
                    self.sample(msg, Node::Rsu(k));
                    let cost = self.hs();
                    self.send(Node::Rsu(k), cost, acc, vec![Node::Vehicle(v)], None, false);
                }
                Err(_) => self.c.failed_auths += 1,
            },
            WireMessage::Pag1(p1) => {
                let rsu = &mut self.rsus[k];
                let Some(keys) = rsu
                    .auth
                    .session(&p1.fid)
                    .filter(|s| s.state().is_authenticated())
                    .map(|s| s.channel().clone())
                else {
                    return;
                };
                let existing: Vec<Node> = rsu.members.values().map(|&i| Node::Vehicle(i)).collect();
                let Ok(out) = rsu.group.handle_join(&g, &p1, &keys, &mut self.rng) else {
                    return;
                };
                rsu.members.insert(p1.fid, v);
                let size = rsu.group.len();
                self.c.rekey += 1;
                self.sample(msg, Node::Rsu(k));
                if let Some(p2) = out.pag2_for(&p1.fid).cloned() {
                    let cost = (size as f64 + 1.0) * self.t.t_mul + self.hs();
                    self.send(Node::Rsu(k), cost, p2, vec![Node::Vehicle(v)], None, false);
                }
                if !existing.is_empty() {
                    let cost = self.hs();
                    self.send(Node::Rsu(k), cost, out.pag3, existing, None, false);
                }
                self.on_gk_change(k);
            }
            WireMessage::Broadcast(b) => {
                if self.rsu_keys(k).any(|gk| comm::open_broadcast(&g, gk, &b).is_ok()) {
                    self.sample(msg, Node::Rsu(k));
                } else {
                    self.c.stale += 1;
                }
            }
            WireMessage::ToRsu(m) => {
                let keys = self.rsus[k].auth.session(&m.fid).map(|s| s.channel().clone());
                match keys.map(|keys| comm::open_to_rsu(&g, &keys, &m)) {
                    Some(Ok(_)) => self.sample(msg, Node::Rsu(k)),
                    _ => self.c.stale += 1,
                }
            }
            WireMessage::Word1(w1) => {
                let ok = self.rsu_keys(k).any(|gk| comm::open_directory_request(&g, gk, &w1).is_ok());
                if !ok {
                    self.c.stale += 1;
                    return;
                }
                self.sample(msg, Node::Rsu(k));
                self.rsus[k].directory_active = true;
                self.serve_directory(k);
            }
            _ => {}
        }
    }

    /// Current key, then the one it replaced: senders may not have seen the
    /// latest rekey yet.
    fn rsu_keys(&self, k: usize) -> impl Iterator<Item = &GElem> {
        let grp = &self.rsus[k].group;
        grp.gk().into_iter().chain(grp.prev_gk())
    }

    fn vehicle_from_vehicle(&mut self, v: usize, msg: usize, wire: WireMessage) {
        let g = self.g.clone();
        let Some(k) = self.messages[msg].group else { return };
        let Some(m) = self.vehicles[v].groups.get(&k) else {
            self.c.stale += 1;
            return;
        };
        let Some(gk) = m.member.gk().cloned() else { return };
        match wire {
            WireMessage::Broadcast(b) => match comm::open_broadcast(&g, &gk, &b) {
                Ok(_) => self.sample(msg, Node::Vehicle(v)),
                Err(_) => self.c.stale += 1,
            },
            WireMessage::Word3(w) => {
                let Ok((from, to)) = comm::peek_peer(&g, &gk, &w) else {
                    self.c.stale += 1;
                    return;
                };
                if to != *m.member.fid() {
                    return;
                }
                let opened = m.directory.as_ref().and_then(|d| {
                    let ch = comm::derive_vvk(&g, to, m.member.lambda(), from, d.blinded(&from)?, d.epoch);
                    comm::recv_peer(&g, &ch, &gk, &w).ok()
                });
                match opened {
                    Some(_) => self.sample(msg, Node::Vehicle(v)),
                    None => self.c.stale += 1,
                }
            }
            _ => {}
        }
    }

    // ---- periodic traffic ----

    fn on_tick(&mut self, v: usize) {
        let cfg = &self.cfg;
        let (interval, jitter, p_rsu, p_peer, size) = (
            cfg.broadcast_interval_ms,
            cfg.interval_variance_s * 1000.0,
            cfg.to_rsu_fraction,
            cfg.peer_fraction,
            cfg.message_size_bytes,
        );
        let (g, hs, t_mul) = (self.g.clone(), self.hs(), self.t.t_mul);
        let rng = &mut self.vehicles[v].rng;
        // Draws happen on every tick so the stream does not depend on load.
        let delta = if jitter > 0.0 {
            rng.gen_range(-jitter..=jitter)
        } else {
            0.0
        };
        let choice: f64 = rng.gen();
        let pick: u64 = rng.gen();
        self.push(self.now + ns(interval + delta), EventKind::VehicleBroadcast { vehicle: v });

        let veh = &mut self.vehicles[v];
        let Some(k) = veh.current else { return };
        let Some(m) = veh.groups.get(&k) else { return };
        let Some(gk) = m.member.gk().cloned() else { return };
        veh.counter += 1;
        let mut payload = vec![0u8; size];
        let c = veh.counter.to_be_bytes();
        let n = c.len().min(size);
        payload[..n].copy_from_slice(&c[..n]);
        let fid = *m.member.fid();

        if choice < p_rsu {
            let msg = comm::to_rsu(&g, &fid, &m.keys, &payload, &mut self.rng);
            self.send(Node::Vehicle(v), hs, msg, vec![Node::Rsu(k)], None, false);
            self.tag_group(k);
            return;
        }
        if choice < p_rsu + p_peer {
            let target = m.directory.as_ref().filter(|d| d.epoch == m.member.epoch()).and_then(|d| {
                let others: Vec<&(Pseudonym, GElem)> = d.entries.iter().filter(|(f, _)| *f != fid).collect();
                if others.is_empty() {
                    return None;
                }
                let (pf, pb) = others[(pick % others.len() as u64) as usize];
                Some((comm::derive_vvk(&g, fid, m.member.lambda(), *pf, pb, d.epoch), *pf))
            });
            match target {
                Some((ch, peer_fid)) => {
                    let msg = comm::send_peer(&g, &ch, &gk, &payload, &mut self.rng);
                    let peer = self.rsus[k].members.get(&peer_fid).copied();
                    let to = self.member_nodes(k, Some(v));
                    self.send(Node::Vehicle(v), 2.0 * hs + t_mul, msg, to, peer, false);
                    self.tag_group(k);
                }
                None => {
                    let msg = comm::request_directory(&g, &gk, &fid, &mut self.rng);
                    self.send(Node::Vehicle(v), hs, msg, vec![Node::Rsu(k)], None, false);
                    self.tag_group(k);
                }
            }
            return;
        }
        let msg = comm::broadcast(&g, &gk, &fid, &payload, &mut self.rng);
        let mut to = vec![Node::Rsu(k)];
        to.extend(self.member_nodes(k, Some(v)));
        self.send(Node::Vehicle(v), hs, msg, to, None, false);
        self.tag_group(k);
    }

    fn tag_group(&mut self, k: usize) {
        if let Some(m) = self.messages.last_mut() {
            m.group = Some(k);
        }
    }

    fn report(self) -> MetricsReport {
        let vehicles = self
            .vehicles
            .iter()
            .map(|v| {
                let mut s = v.stats.clone();
                s.pending_since_ms = v.pending.as_ref().map(|p| ms(p.entered));
                s
            })
            .collect();
        MetricsReport {
            n_vehicles: self.cfg.n_vehicles,
            rng_seed: self.cfg.rng_seed,
            average_delay_ms: average_delay(&self.samples).ok(),
            total_overhead_bytes: self.c.total_overhead,
            obu_to_rsu_messages: self.c.obu_to_rsu,
            overhead_exceptions: self.c.overhead_exceptions,
            auth_count: self.c.auth,
            fastpath_count: self.c.fastpath,
            rekey_count: self.c.rekey,
            failed_auths: self.c.failed_auths,
            rekey_invalidated: self.c.invalidated,
            stale_drops: self.c.stale,
            out_of_range: self.c.out_of_range,
            messages_sent: self.c.sent,
            deliveries: self.c.deliveries,
            delay_samples: self.samples.len() as u64,
            events: self.c.events,
            messages_by_type: self.c.by_type,
            overhead_by_type: self.c.overhead_by_type,
            vehicles,
            trace_digest: hex::encode(self.trace.finalize()),
        }
    }
}
