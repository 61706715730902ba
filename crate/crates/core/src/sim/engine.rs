//! Single-threaded discrete-event engine.
//!
//! Truth (trajectories, clocks, radio) lives here; agents only see what the
//! radio hands them. Events are ordered by absolute time, then kind, then
//! agent id, then insertion order.

use super::runlog::{Flag, Quantity, Record, Role, RunLog, TraceEvent, TraceKind};
use super::scenario::{GapMode, Scenario, ScenarioError};
use crate::channel::{arrival, is_lost, measure_toa, ToaObservation};
use crate::child_jlas::{
    cold_start, frame_observations, jlas_solve, ChildState, Frame, GapSource, JlasError, JlasOptions,
};
use crate::clock::{ClockError, ClockNoiseSpec, ClockState, TimedClock};
use crate::parent_loc::{closed_form_init, refine_topology, DistanceMatrix, GaugeTransform, RefineOptions, Topology};
use crate::parent_sync::{FilterBank, FilterError};
use crate::protocol::{
    decode_packet, encode_packet, scheduler_step, Packet, PacketError, SchedulerEvent, SchedulerState,
};
use crate::ranging::{estimate_range, propagate_remote_offset};
use crate::rng::{stream, Purpose, StreamRng};
use nalgebra::{Matrix2, Vector2};
use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::rc::Rc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("clock: {0}")]
    Clock(#[from] ClockError),
    #[error("filter at parent {agent}: {source}")]
    Filter { agent: u16, source: FilterError },
    #[error("codec: {0}")]
    Codec(#[from] PacketError),
}

/// Fallback delay for a timer whose wake time maps to the past, seconds.
const MIN_TIMER_DELAY: f64 = 1e-9;

/// Frames of truth snapshots kept for children still assembling a frame.
const SNAPSHOT_FRAMES: u64 = 16;

#[derive(Debug, Clone)]
enum EventKind {
    ClockStep { offset: f64 },
    Reception { tx: u16, frame: u64, t_tx: f64, bytes: Rc<[u8]> },
    Timer { generation: u64 },
    PowerOn,
}

impl EventKind {
    fn rank(&self) -> u8 {
        match self {
            EventKind::ClockStep { .. } => 0,
            EventKind::Reception { .. } => 1,
            EventKind::Timer { .. } => 2,
            EventKind::PowerOn => 3,
        }
    }
}

#[derive(Debug, Clone)]
struct Event {
    time: f64,
    agent: u16,
    seq: u64,
    kind: EventKind,
}

impl Event {
    fn key(&self) -> (f64, u8, u16, u64) {
        (self.time, self.kind.rank(), self.agent, self.seq)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    /// Reversed so the max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        b.0.total_cmp(&a.0)
            .then(b.1.cmp(&a.1))
            .then(b.2.cmp(&a.2))
            .then(b.3.cmp(&a.3))
    }
}

struct Body {
    clock: TimedClock,
    noise_rng: StreamRng,
    power_on: f64,
    antenna_tx: f64,
    antenna_rx: f64,
}

struct ParentAgent {
    sched: Option<SchedulerState>,
    timer_generation: u64,
    bank: FilterBank,
    /// Latest packet from each parent with the local reception time.
    latest: BTreeMap<u8, (Packet, f64)>,
    /// Direct ranges, meters, keyed by neighbor.
    ranges: BTreeMap<u8, f64>,
    topology: Option<Topology>,
}

struct ChildAgent {
    /// Frame index and observations since the reference packet.
    buffer: Option<(u64, Vec<(u8, ToaObservation)>)>,
    /// Last solution and the local reception time of its reference packet.
    last: Option<(ChildState, f64)>,
}

/// True clocks and positions at a reference broadcast.
struct Snapshot {
    time: f64,
    clocks: Vec<ClockState>,
    positions: Vec<Vector2<f64>>,
}

struct Links {
    stamping: Vec<StreamRng>,
    loss: Vec<StreamRng>,
    agents: usize,
}

impl Links {
    fn new(seed: u64, parents: usize, agents: usize) -> Self {
        let mut stamping = Vec::with_capacity(parents * agents);
        let mut loss = Vec::with_capacity(parents * agents);
        for tx in 1..=parents as u16 {
            for rx in 1..=agents as u16 {
                stamping.push(stream(seed, Purpose::Stamping, tx, rx));
                loss.push(stream(seed, Purpose::Loss, tx, rx));
            }
        }
        Self {
            stamping,
            loss,
            agents,
        }
    }

    fn index(&self, tx: u16, rx: u16) -> usize {
        (tx as usize - 1) * self.agents + rx as usize - 1
    }
}

pub struct Engine<'s> {
    s: &'s Scenario,
    noise: ClockNoiseSpec,
    queue: BinaryHeap<Event>,
    seq: u64,
    bodies: Vec<Body>,
    parents: Vec<ParentAgent>,
    children: Vec<ChildAgent>,
    links: Links,
    /// Index of the current frame; advances at each reference broadcast.
    frame: Option<u64>,
    snapshots: BTreeMap<u64, Snapshot>,
    log: RunLog,
}

/// Run a scenario to completion.
pub fn run(s: &Scenario) -> Result<RunLog, SimError> {
    s.validate()?;
    let mut e = Engine::new(s)?;
    e.run_to_end()?;
    Ok(e.log)
}

impl<'s> Engine<'s> {
    pub fn new(s: &'s Scenario) -> Result<Self, SimError> {
        let n = s.num_agents();
        let bodies = (1..=n as u16)
            .map(|id| {
                let mut init = stream(s.seed, Purpose::InitialClock, id, 0);
                let a = s.agent(id);
                Body {
                    clock: TimedClock::new(0.0, s.initial_clock(id, &mut init)),
                    noise_rng: stream(s.seed, Purpose::ClockNoise, id, 0),
                    power_on: s.power_on(id),
                    antenna_tx: a.antenna_delay_tx,
                    antenna_rx: a.antenna_delay_rx,
                }
            })
            .collect();
        let [c0, c1] = s.estimator.init_cov;
        let init_cov = Matrix2::new(c0, 0.0, 0.0, c1);
        let parents = (1..=s.num_parents as u8)
            .map(|id| {
                Ok(ParentAgent {
                    sched: None,
                    timer_generation: 0,
                    bank: FilterBank::new(id, s.num_parents, init_cov)
                        .map_err(|source| SimError::Filter { agent: id as u16, source })?,
                    latest: BTreeMap::new(),
                    ranges: BTreeMap::new(),
                    topology: None,
                })
            })
            .collect::<Result<_, SimError>>()?;
        let children = (0..s.num_children)
            .map(|_| ChildAgent {
                buffer: None,
                last: None,
            })
            .collect();
        let mut e = Self {
            s,
            noise: s.clock.noise(),
            queue: BinaryHeap::new(),
            seq: 0,
            bodies,
            parents,
            children,
            links: Links::new(s.seed, s.num_parents, n),
            frame: None,
            snapshots: BTreeMap::new(),
            log: RunLog::default(),
        };
        for id in 1..=n as u16 {
            let t = e.bodies[id as usize - 1].power_on;
            e.push(t, id, EventKind::PowerOn);
        }
        for step in &s.clock_steps {
            e.push(step.at, step.agent, EventKind::ClockStep { offset: step.offset });
        }
        Ok(e)
    }

    fn push(&mut self, time: f64, agent: u16, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Event {
            time,
            agent,
            seq: self.seq,
            kind,
        });
    }

    pub fn run_to_end(&mut self) -> Result<(), SimError> {
        while let Some(ev) = self.queue.peek() {
            if ev.time > self.s.duration {
                break;
            }
            let ev = self.queue.pop().expect("peeked");
            self.dispatch(ev)?;
        }
        Ok(())
    }

    pub fn into_log(self) -> RunLog {
        self.log
    }

    fn dispatch(&mut self, ev: Event) -> Result<(), SimError> {
        let id = ev.agent;
        match ev.kind {
            EventKind::ClockStep { offset } => {
                self.advance_clock(id, ev.time)?;
                self.bodies[id as usize - 1].clock.state.offset += offset;
                if self.s.is_parent(id) {
                    self.arm_timer(id as u8, ev.time);
                }
            }
            EventKind::PowerOn => {
                self.advance_clock(id, ev.time)?;
                if self.s.is_parent(id) {
                    let local = self.local(id, ev.time);
                    let p = &mut self.parents[id as usize - 1];
                    p.sched = Some(SchedulerState::power_on(
                        id as u8,
                        self.s.num_parents,
                        self.s.slot_interval,
                        local,
                        self.s.listen_window(),
                    ));
                    self.arm_timer(id as u8, ev.time);
                }
            }
            EventKind::Timer { generation } => {
                if self.parents[id as usize - 1].timer_generation == generation {
                    self.on_timer(id as u8, ev.time)?;
                }
            }
            EventKind::Reception { tx, frame, t_tx, bytes } => {
                self.on_reception(id, tx, frame, t_tx, &bytes, ev.time)?;
            }
        }
        Ok(())
    }

    fn advance_clock(&mut self, id: u16, t: f64) -> Result<(), SimError> {
        let b = &mut self.bodies[id as usize - 1];
        b.clock.advance(t, &self.noise, &mut b.noise_rng)?;
        Ok(())
    }

    fn local(&self, id: u16, t: f64) -> f64 {
        self.bodies[id as usize - 1].clock.read(t)
    }

    /// Schedule the parent's next wake-up, invalidating any earlier timer.
    fn arm_timer(&mut self, id: u8, now: f64) {
        let p = &mut self.parents[id as usize - 1];
        p.timer_generation += 1;
        let generation = p.timer_generation;
        let Some(wake) = p.sched.and_then(|s| s.wake_time()) else {
            return;
        };
        let at = self.bodies[id as usize - 1].clock.absolute_time_of(wake);
        let at = if at > now { at } else { now + MIN_TIMER_DELAY };
        self.push(at, id as u16, EventKind::Timer { generation });
    }

    fn on_timer(&mut self, id: u8, t: f64) -> Result<(), SimError> {
        self.advance_clock(id as u16, t)?;
        let local = self.local(id as u16, t);
        let Some(sched) = self.parents[id as usize - 1].sched else {
            return Ok(());
        };
        let (sched, cmd) = scheduler_step(sched, SchedulerEvent::Timer { local });
        self.parents[id as usize - 1].sched = Some(sched);
        if let Some(cmd) = cmd {
            self.broadcast(id, cmd.local, t)?;
        }
        self.arm_timer(id, t);
        Ok(())
    }

    fn broadcast(&mut self, id: u8, local: f64, t: f64) -> Result<(), SimError> {
        let s = self.s;
        if id == s.estimator.reference_parent {
            let k = self.frame.map_or(0, |f| f + 1);
            self.frame = Some(k);
            self.take_snapshot(k, t);
        }
        let frame = self.frame.unwrap_or(0);

        let position = self.solve_topology(id);
        let p = &mut self.parents[id as usize - 1];
        let table = p
            .bank
            .clock_table(local, &self.noise, s.estimator.staleness_threshold);
        let packet = Packet {
            sender_id: id,
            tx_timestamp: local,
            position,
            clock_table: table,
        };
        let sched = p.sched.expect("broadcasting parent is powered");
        p.sched = Some(scheduler_step(sched, SchedulerEvent::OwnBroadcast { local }).0);

        self.log_parent(id, frame, t, &packet);
        self.log.trace.push(TraceEvent {
            time: t,
            kind: TraceKind::Broadcast,
            tx: id as u16,
            rx: 0,
            frame,
            t_tx: t,
        });

        let bytes: Rc<[u8]> = encode_packet(&packet)?.into();
        let tx = id as u16;
        let tx_pos = s.agent(tx).trajectory.position_at(t);
        for rx in 1..=s.num_agents() as u16 {
            if rx == tx {
                continue;
            }
            let li = self.links.index(tx, rx);
            if is_lost(s.radio.loss_prob, &mut self.links.loss[li]) {
                self.log.trace.push(TraceEvent {
                    time: t,
                    kind: TraceKind::Loss,
                    tx,
                    rx,
                    frame,
                    t_tx: t,
                });
                continue;
            }
            let fixed = self.bodies[tx as usize - 1].antenna_tx
                + self.bodies[rx as usize - 1].antenna_rx
                + s.radio.link_bias(tx, rx);
            let a = arrival(tx_pos, &s.agent(rx).trajectory, t, fixed, s.radio.v_c);
            self.push(
                a.t_rx,
                rx,
                EventKind::Reception {
                    tx,
                    frame,
                    t_tx: t,
                    bytes: bytes.clone(),
                },
            );
        }
        Ok(())
    }

    fn take_snapshot(&mut self, frame: u64, t: f64) {
        let s = self.s;
        let snap = Snapshot {
            time: t,
            clocks: self.bodies.iter().map(|b| b.clock.state_at(t)).collect(),
            positions: (1..=s.num_agents() as u16)
                .map(|id| s.agent(id).trajectory.position_at(t))
                .collect(),
        };
        self.snapshots.insert(frame, snap);
        if frame >= SNAPSHOT_FRAMES {
            self.snapshots = self.snapshots.split_off(&(frame - SNAPSHOT_FRAMES));
        }
    }

    /// Average of the two calibrated antenna delays seen by a pair's
    /// pseudo-offsets, split into transmit and receive parts.
    fn pair_delays(&self, a: u8, b: u8) -> (f64, f64) {
        let (ba, bb) = (&self.bodies[a as usize - 1], &self.bodies[b as usize - 1]);
        (0.5 * (ba.antenna_tx + bb.antenna_tx), 0.5 * (ba.antenna_rx + bb.antenna_rx))
    }

    /// Refresh the parent's topology from its ranges and the latest packets,
    /// returning its own position (NaN until a topology exists).
    fn solve_topology(&mut self, id: u8) -> Vector2<f64> {
        let s = self.s;
        let n = s.num_parents;
        let v_c = s.radio.v_c;
        let mut d = DistanceMatrix::new(n);
        let p = &self.parents[id as usize - 1];
        for (&j, &r) in &p.ranges {
            d.set(id as usize - 1, j as usize - 1, r);
        }
        for (&k, (pk, rk)) in &p.latest {
            for (&l, (pl, rl)) in p.latest.range(k + 1..) {
                let (Some(kl), Some(lk)) = (pk.entry(l), pl.entry(k)) else { continue };
                let target = rk.max(*rl);
                let a = propagate_remote_offset(kl.pseudo_offset, kl.skew, target - rk);
                let b = propagate_remote_offset(lk.pseudo_offset, lk.skew, target - rl);
                let (tau_tx, tau_rx) = self.pair_delays(k, l);
                let r = estimate_range(a, b, tau_tx, tau_rx, v_c);
                d.set(k as usize - 1, l as usize - 1, r.range);
            }
        }
        let opts = RefineOptions {
            max_iters: s.estimator.refine_sweeps,
            tol: s.estimator.refine_tol,
        };
        let init = match &p.topology {
            Some(t) => Some(t.clone()),
            None => closed_form_init(&d).ok(),
        };
        let refined = init.and_then(|t| refine_topology(&d, &t, opts).ok());
        let p = &mut self.parents[id as usize - 1];
        if let Some(r) = refined {
            if r.topology.positions.iter().all(|q| q.x.is_finite() && q.y.is_finite()) {
                p.topology = Some(r.topology);
            }
        }
        match &p.topology {
            Some(t) => t.positions[id as usize - 1],
            None => Vector2::new(f64::NAN, f64::NAN),
        }
    }

    fn gauge_at(positions: &[Vector2<f64>]) -> GaugeTransform {
        GaugeTransform::from_anchors(&positions[..3])
    }

    fn log_parent(&mut self, id: u8, frame: u64, t: f64, packet: &Packet) {
        let s = self.s;
        let me = id as u16;
        let truth_pos: Vec<Vector2<f64>> = (1..=s.num_parents as u16)
            .map(|k| s.agent(k).trajectory.position_at(t))
            .collect();
        let my_clock = self.bodies[me as usize - 1].clock.state_at(t);
        for e in &packet.clock_table {
            let j = e.neighbor_id as u16;
            let other = self.bodies[j as usize - 1].clock.state_at(t);
            let d = (truth_pos[me as usize - 1] - truth_pos[j as usize - 1]).norm();
            let delay = self.bodies[j as usize - 1].antenna_tx
                + self.bodies[me as usize - 1].antenna_rx
                + s.radio.link_bias(j, me);
            let truth = Record {
                frame,
                time: t,
                agent: me,
                role: Role::Parent,
                peer: j,
                quantity: Quantity::Clock,
                value1: my_clock.offset - other.offset + delay + d / s.radio.v_c,
                value2: my_clock.skew - other.skew,
                flag: Flag::Ok,
            };
            let est = Record {
                value1: e.pseudo_offset,
                value2: e.skew,
                flag: if e.valid { Flag::Ok } else { Flag::Invalid },
                ..truth
            };
            self.log.push(est, truth);
        }
        let true_pos = Self::gauge_at(&truth_pos).apply(truth_pos[me as usize - 1]);
        let truth = Record {
            frame,
            time: t,
            agent: me,
            role: Role::Parent,
            peer: 0,
            quantity: Quantity::Position,
            value1: true_pos.x,
            value2: true_pos.y,
            flag: Flag::Ok,
        };
        let valid = packet.position.x.is_finite() && packet.position.y.is_finite();
        let est = Record {
            value1: packet.position.x,
            value2: packet.position.y,
            flag: if valid { Flag::Ok } else { Flag::Invalid },
            ..truth
        };
        self.log.push(est, truth);
    }

    fn on_reception(&mut self, rx: u16, tx: u16, frame: u64, t_tx: f64, bytes: &[u8], t: f64) -> Result<(), SimError> {
        let trace = |kind| TraceEvent {
            time: t,
            kind,
            tx,
            rx,
            frame,
            t_tx,
        };
        if t < self.bodies[rx as usize - 1].power_on {
            self.log.trace.push(trace(TraceKind::Missed));
            return Ok(());
        }
        self.advance_clock(rx, t)?;
        let rx_local = self.local(rx, t);
        let packet = decode_packet(bytes)?;
        let li = self.links.index(tx, rx);
        let toa = measure_toa(rx_local, packet.tx_timestamp, self.s.radio.xi, &mut self.links.stamping[li]);
        self.log.trace.push(trace(TraceKind::Reception));
        let obs = ToaObservation {
            sender_id: tx,
            receiver_id: rx,
            rx_timestamp: rx_local,
            toa,
            packet,
        };
        if self.s.is_parent(rx) {
            self.parent_receive(rx as u8, obs, frame, t_tx, t)
        } else {
            self.child_receive(rx, obs, frame);
            Ok(())
        }
    }

    fn parent_receive(&mut self, id: u8, obs: ToaObservation, frame: u64, t_tx: f64, t: f64) -> Result<(), SimError> {
        let s = self.s;
        let j = obs.sender_id as u8;
        let p = &mut self.parents[id as usize - 1];
        if let Some(sched) = p.sched {
            p.sched = Some(
                scheduler_step(
                    sched,
                    SchedulerEvent::Reception {
                        sender: j,
                        local: obs.rx_timestamp,
                    },
                )
                .0,
            );
        }
        let f = p
            .bank
            .update(j, obs.toa, obs.rx_timestamp, &self.noise, s.radio.xi)
            .map_err(|source| SimError::Filter {
                agent: id as u16,
                source,
            })?;
        let local_offset = f.state[0];
        let remote = obs.packet.entry(id).copied();
        p.latest.insert(j, (obs.packet, obs.rx_timestamp));
        if let Some(e) = remote {
            let (tau_tx, tau_rx) = self.pair_delays(id, j);
            let r = estimate_range(local_offset, e.pseudo_offset, tau_tx, tau_rx, s.radio.v_c);
            self.parents[id as usize - 1].ranges.insert(j, r.range);
            let d = (s.agent(id as u16).trajectory.position_at(t_tx) - s.agent(j as u16).trajectory.position_at(t_tx)).norm();
            let truth = Record {
                frame,
                time: t_tx,
                agent: id as u16,
                role: Role::Parent,
                peer: j as u16,
                quantity: Quantity::Range,
                value1: d,
                value2: f64::NAN,
                flag: Flag::Ok,
            };
            let est = Record {
                value1: r.range,
                ..truth
            };
            self.log.push(est, truth);
        }
        self.arm_timer(id, t);
        Ok(())
    }

    fn jlas_options(&self, child: u16) -> JlasOptions {
        let s = self.s;
        JlasOptions {
            max_iters: s.estimator.jlas_max_iters,
            tol: s.estimator.jlas_tol,
            use_skew_term: s.estimator.jlas_skew_term,
            gaps: match s.estimator.jlas_gaps {
                GapMode::Timestamps => GapSource::Timestamps,
                GapMode::Nominal => GapSource::Nominal {
                    slot_interval: s.slot_interval,
                    num_parents: s.num_parents,
                },
            },
            v_c: s.radio.v_c,
            antenna_rx: self.bodies[child as usize - 1].antenna_rx,
        }
    }

    fn child_receive(&mut self, id: u16, obs: ToaObservation, frame: u64) {
        let s = self.s;
        let p = s.num_parents as i64;
        let reference = s.estimator.reference_parent;
        let slot_of = |j: u8| (j as i64 - reference as i64).rem_euclid(p);
        let j = obs.sender_id as u8;
        let k = id as usize - s.num_parents - 1;
        if j == reference {
            if let Some(done) = self.children[k].buffer.take() {
                // last slot of the previous frame was missed
                self.solve_child(id, done);
            }
            self.children[k].buffer = Some((frame, vec![(j, obs)]));
        } else if let Some((_, obs_list)) = &mut self.children[k].buffer {
            let last_slot = obs_list.last().map_or(0, |(m, _)| slot_of(*m));
            if slot_of(j) <= last_slot {
                // a new frame began without its reference packet
                let done = self.children[k].buffer.take().expect("buffer present");
                self.solve_child(id, done);
                return;
            }
            obs_list.push((j, obs));
        }
        if slot_of(j) == p - 1 {
            if let Some(done) = self.children[k].buffer.take() {
                self.solve_child(id, done);
            }
        }
    }

    fn solve_child(&mut self, id: u16, (frame, observations): (u64, Vec<(u8, ToaObservation)>)) {
        let s = self.s;
        let k = id as usize - s.num_parents - 1;
        let reference = s.estimator.reference_parent;
        let ref_stamp = observations[0].1.rx_timestamp;
        let frame_data = Frame {
            observations,
            reference_id: reference,
        };
        let opts = self.jlas_options(id);
        let antenna = |j: u8| self.bodies[j as usize - 1].antenna_tx;
        let solved: Result<ChildState, JlasError> = frame_observations(&frame_data, antenna, &opts).and_then(|obs| {
            let init = match self.children[k].last {
                Some((st, stamp)) => ChildState {
                    offset: st.offset + st.skew * (ref_stamp - stamp),
                    ..st
                },
                None => cold_start(&obs),
            };
            jlas_solve(&obs, &init, &opts).map(|sol| sol.state)
        });
        let (state, flag) = match solved {
            Ok(st) => {
                self.children[k].last = Some((st, ref_stamp));
                (st, Flag::Ok)
            }
            Err(_) => match self.children[k].last {
                Some((st, _)) => (st, Flag::Held),
                None => return,
            },
        };
        let Some(snap) = self.snapshots.get(&frame) else { return };
        let ci = id as usize - 1;
        let ri = reference as usize - 1;
        let gauge = Self::gauge_at(&snap.positions);
        let pos = gauge.apply(snap.positions[ci]);
        let truth_clock = Record {
            frame,
            time: snap.time,
            agent: id,
            role: Role::Child,
            peer: reference as u16,
            quantity: Quantity::Clock,
            value1: snap.clocks[ci].offset - snap.clocks[ri].offset,
            value2: snap.clocks[ci].skew - snap.clocks[ri].skew,
            flag: Flag::Ok,
        };
        let truth_pos = Record {
            peer: 0,
            quantity: Quantity::Position,
            value1: pos.x,
            value2: pos.y,
            ..truth_clock
        };
        self.log.push(
            Record {
                value1: state.offset,
                value2: state.skew,
                flag,
                ..truth_clock
            },
            truth_clock,
        );
        self.log.push(
            Record {
                value1: state.position.x,
                value2: state.position.y,
                flag,
                ..truth_pos
            },
            truth_pos,
        );
    }
}
