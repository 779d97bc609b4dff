//! Discrete-event scheduler owning every node of the cell.
//!
//! Time is integer microseconds. Wakes are ordered by (time, node priority,
//! insertion order). Belt positions and the filter-wheel angle are pure
//! functions of integer times, so the trace does not depend on how a caller
//! slices `step_until`.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::sync::Arc;

use super::command::Command;
use super::event::{EventKind, Node, SimEvent, TagValue};
use super::metrics::{mean, ColorCounts, Metrics};
use super::params::CellParams;
use super::scenario::{secs_to_us, Scenario, ScheduledPart};
use crate::arduino::{step_servo, ArduinoState, Level};
use crate::color::{ColorClass, ColorFlags};
use crate::error::{ConfigError, FaultCause, LadderError, RuntimeFault, SimError};
use crate::iobus::{
    do_sink, Bus, Direction, DoSink, TagAssembly, Words, REMOVE_PART_DI, REMOVE_PART_DI_SOURCE,
    ROBOT_DO_WIRING,
};
use crate::optics::apply_edge_leak;
use crate::plc::{default_program, verdict, LadderProgram, Plc, Verdict};
use crate::tp::{self, Interpreter, Pose, Registers, RobotEnv, Step, TpProgram, TpStatement};
use crate::vision::{render, run_find, FilterPosition, Scene, SceneBlock, VisionRegister};
use crate::workcell::{time_to_next_edge, ConveyorState, Part, PartState, RejectBin, GEOM_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Wake {
    BusTick,
    BusDeliver,
    PlcScan,
    Robot,
    ArduinoSettled { gen: u64 },
    Belt { gen: u64 },
    Spawn(usize),
    FeederRetry { gen: u64 },
    Operator(usize),
}

impl Wake {
    fn node(self) -> Node {
        match self {
            Wake::BusTick | Wake::BusDeliver => Node::Bus,
            Wake::PlcScan => Node::Plc,
            Wake::Robot => Node::Robot,
            Wake::ArduinoSettled { .. } => Node::Arduino,
            Wake::Belt { .. } | Wake::Spawn(_) | Wake::FeederRetry { .. } => Node::Workcell,
            Wake::Operator(_) => Node::Operator,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Queued {
    t_us: u64,
    prio: u8,
    seq: u64,
    wake: Wake,
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.t_us, self.prio, self.seq).cmp(&(other.t_us, other.prio, other.seq))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// What the robot controller's dispatcher is doing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotPhase {
    Idle,
    Scanning,
    AwaitVerdict,
    Sorting,
    /// Running a program started directly on a bench cell.
    Bench,
}

#[derive(Debug, Clone)]
struct PartSlot {
    part: Part,
    spawn_x: f64,
    odo_at_spawn_us: u64,
}

/// Filter wheel motion as a pure function of time.
#[derive(Debug, Clone)]
struct Wheel {
    state: ArduinoState,
    from_deg: f64,
    from_us: u64,
}

struct PlcNode {
    plc: Plc,
    pending: VecDeque<Command>,
    momentary: Vec<&'static str>,
}

/// Everything the robot program can touch, plus the scheduler.
struct World {
    params: CellParams,
    now_us: u64,
    queue: BinaryHeap<Reverse<Queued>>,
    wake_seq: u64,
    events: Vec<SimEvent>,
    event_seq: u64,

    conveyor: ConveyorState,
    odometer_us: u64,
    odo_updated_us: u64,
    parts: Vec<PartSlot>,
    next_part_id: u32,
    beam: bool,
    beam_part: Option<u32>,
    belt_gen: u64,
    belt_dirty: bool,
    feeder: VecDeque<ScheduledPart>,
    feeder_gen: u64,
    bin: RejectBin,

    wheel: Wheel,
    wheel_gen: u64,

    dos: BTreeMap<u16, bool>,
    bench_di: BTreeMap<u16, bool>,
    pose: Pose,
    motion_target: Option<Pose>,
    held: Option<u32>,
    program_name: Option<String>,

    plc: Option<PlcNode>,
    bus: Option<Bus>,

    last_progress_us: u64,
    beam_rise_us: BTreeMap<u32, u64>,
    present_part: Option<u32>,
    verdict_latencies: Vec<f64>,
    cycle_times: Vec<f64>,
    verdicts: u32,
    misclassifications: u32,
    scans: u32,
}

impl World {
    fn emit(&mut self, source: Node, kind: EventKind) {
        let progress = matches!(
            kind,
            EventKind::PartSpawn { .. }
                | EventKind::PartState { .. }
                | EventKind::BeamEdge { .. }
                | EventKind::ProgramStart { .. }
                | EventKind::ProgramEnd { .. }
                | EventKind::VerdictIssued { .. }
        );
        if progress {
            self.last_progress_us = self.now_us;
        }
        self.events.push(SimEvent {
            seq: self.event_seq,
            t_us: self.now_us,
            source,
            kind,
        });
        self.event_seq += 1;
    }

    fn schedule(&mut self, t_us: u64, wake: Wake) {
        self.queue.push(Reverse(Queued {
            t_us,
            prio: wake.node().priority(),
            seq: self.wake_seq,
            wake,
        }));
        self.wake_seq += 1;
    }

    /// Moves the belt odometer and every on-belt part to `t_us`.
    fn advance_to(&mut self, t_us: u64) {
        if self.conveyor.running {
            self.odometer_us += t_us - self.odo_updated_us;
        }
        self.odo_updated_us = t_us;
        self.now_us = t_us;
        let speed = self.conveyor.speed_mm_per_s;
        for slot in &mut self.parts {
            if slot.part.state == PartState::OnBelt {
                let run_s = (self.odometer_us - slot.odo_at_spawn_us) as f64 / 1e6;
                slot.part.position_mm.0 = slot.spawn_x + speed * run_s;
            }
        }
    }

    fn set_belt_running(&mut self, running: bool) {
        if self.conveyor.running != running {
            self.conveyor.running = running;
            self.belt_dirty = true;
        }
    }

    fn part_mut(&mut self, id: u32) -> Option<&mut Part> {
        self.parts
            .iter_mut()
            .map(|s| &mut s.part)
            .find(|p| p.id == id)
    }

    fn part(&self, id: u32) -> Option<&Part> {
        self.parts.iter().map(|s| &s.part).find(|p| p.id == id)
    }

    fn part_states(&self) -> Vec<Part> {
        self.parts.iter().map(|s| s.part.clone()).collect()
    }

    fn set_part_state(&mut self, id: u32, state: PartState) {
        let Some(p) = self.part_mut(id) else { return };
        p.state = state;
        let (x_mm, y_mm) = p.position_mm;
        self.belt_dirty = true;
        self.emit(
            Node::Workcell,
            EventKind::PartState {
                part: id,
                state,
                x_mm,
                y_mm,
            },
        );
    }

    fn spawn(&mut self, spec: ScheduledPart) {
        let conv = &self.params.conveyor;
        let id = self.next_part_id;
        self.next_part_id += 1;
        let part = Part::new(id, spec.color, spec.reflectance, conv.part_size_mm)
            .at(conv.spawn_x_mm, spec.y_mm)
            .rotated(spec.rz_deg);
        self.parts.push(PartSlot {
            part,
            spawn_x: conv.spawn_x_mm,
            odo_at_spawn_us: self.odometer_us,
        });
        self.belt_dirty = true;
        self.emit(
            Node::Workcell,
            EventKind::PartSpawn {
                part: id,
                color: spec.color,
                x_mm: conv.spawn_x_mm,
                y_mm: spec.y_mm,
                rz_deg: spec.rz_deg,
            },
        );
    }

    /// Distance the nearest on-belt part has travelled past the spawn point.
    fn entry_clearance(&self) -> Option<f64> {
        let x0 = self.params.conveyor.spawn_x_mm;
        self.parts
            .iter()
            .filter(|s| s.part.state == PartState::OnBelt)
            .map(|s| s.part.x() - x0)
            .reduce(f64::min)
    }

    /// Places waiting parts while the entry zone is clear; otherwise
    /// arranges a retry for when the belt will have cleared it.
    fn try_feed(&mut self) {
        let pitch = self.params.conveyor.min_pitch_mm;
        while !self.feeder.is_empty() {
            match self.entry_clearance() {
                Some(c) if c < pitch - 1e-6 => {
                    if self.conveyor.running {
                        let dt = (pitch - c) / self.conveyor.speed_mm_per_s;
                        let at = self.now_us + ((dt * 1e6).ceil() as u64).max(1);
                        self.feeder_gen += 1;
                        let gen = self.feeder_gen;
                        self.schedule(at, Wake::FeederRetry { gen });
                    }
                    return;
                }
                _ => {
                    let spec = self.feeder.pop_front().expect("non-empty");
                    self.spawn(spec);
                }
            }
        }
    }

    fn wheel_state_at(&self, t_us: u64) -> ArduinoState {
        let mut s = self.wheel.state.clone();
        s.servo_actual_angle_deg = self.wheel.from_deg;
        let dt = (t_us - self.wheel.from_us) as f64 / 1e6;
        step_servo(&s, &self.params.arduino, dt)
    }

    fn set_arduino_inputs(&mut self, a: Level, b: Level) {
        let current = self.wheel_state_at(self.now_us);
        let prev_angle = current.commanded_angle_deg;
        let prev_led = current.led_rgb;
        let mut next = current;
        if !next.set_inputs(a, b) {
            self.wheel.state = next;
            return;
        }
        self.wheel.from_deg = next.servo_actual_angle_deg;
        self.wheel.from_us = self.now_us;
        let travel = (next.commanded_angle_deg - next.servo_actual_angle_deg).abs();
        let (angle, led) = (next.commanded_angle_deg, next.led_rgb);
        self.wheel.state = next;
        if angle != prev_angle {
            self.emit(
                Node::Arduino,
                EventKind::TagChange {
                    tag: "commanded_angle".into(),
                    prev: Some(TagValue::Number(prev_angle)),
                    value: TagValue::Number(angle),
                },
            );
        }
        if led != prev_led {
            self.emit(
                Node::Arduino,
                EventKind::TagChange {
                    tag: "led_rgb".into(),
                    prev: Some(TagValue::Rgb8(prev_led)),
                    value: TagValue::Rgb8(led),
                },
            );
        }
        self.wheel_gen += 1;
        let gen = self.wheel_gen;
        let dt = self.params.arduino.travel_time_s(travel);
        self.schedule(
            self.now_us + (dt * 1e6).ceil() as u64,
            Wake::ArduinoSettled { gen },
        );
    }

    fn robot_do_levels(&self) -> (Level, Level) {
        let on = |i: u16| self.dos.get(&i).copied().unwrap_or(false);
        let mut a = Level::High;
        let mut b = Level::High;
        for (idx, sink) in ROBOT_DO_WIRING {
            match sink {
                DoSink::ArduinoInputA => a = Level::through_relay(on(*idx)),
                DoSink::ArduinoInputB => b = Level::through_relay(on(*idx)),
                _ => {}
            }
        }
        (a, b)
    }

    fn delivered_to_robot(&self) -> TagAssembly {
        match &self.bus {
            Some(bus) => bus.delivered(Direction::PlcToRobot),
            None => TagAssembly::new(Direction::PlcToRobot),
        }
    }

    fn robot_enabled(&self) -> bool {
        self.bus.is_none() || self.delivered_to_robot().bit("Enable")
    }

    fn pick(&mut self) {
        if self.held.is_some() {
            return;
        }
        let tol = self.params.robot.pick_tolerance_mm;
        let (tx, ty) = (self.pose.x, self.pose.y);
        let hit = self
            .parts
            .iter()
            .map(|s| &s.part)
            .filter(|p| p.state == PartState::OnBelt)
            .map(|p| (p.id, (p.x() - tx).hypot(p.y() - ty)))
            .filter(|(_, d)| *d <= tol + GEOM_EPS)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        if let Some((id, _)) = hit {
            self.held = Some(id);
            self.set_part_state(id, PartState::HeldByRobot);
        }
    }

    fn release(&mut self) -> Result<(), FaultCause> {
        let Some(id) = self.held else { return Ok(()) };
        let (x, y) = (self.pose.x, self.pose.y);
        if !self.bin.accepts(x, y) {
            return Err(FaultCause::DropOutsideBin { x, y });
        }
        self.held = None;
        if let Some(p) = self.part_mut(id) {
            p.position_mm = (x, y);
        }
        self.bin.push(id);
        self.set_part_state(id, PartState::InRejectBin);
        Ok(())
    }

    /// Re-evaluates the beam after anything that may have moved a part.
    fn check_beam(&mut self) {
        let parts = self
            .parts
            .iter()
            .map(|s| s.part.clone())
            .collect::<Vec<_>>();
        let blocking = crate::workcell::blocking_part(&self.conveyor, &parts).map(|p| p.id);
        let blocked = blocking.is_some();
        if blocked == self.beam {
            return;
        }
        self.beam = blocked;
        self.beam_part = blocking;
        if let Some(id) = blocking {
            self.beam_rise_us.insert(id, self.now_us);
            self.present_part = Some(id);
        }
        self.emit(
            Node::Workcell,
            EventKind::BeamEdge {
                blocked,
                part: blocking,
            },
        );
        if let Some(node) = &mut self.plc {
            node.plc.set_input("Beam", blocked);
        }
    }

    fn check_passthrough(&mut self) {
        let end = self.conveyor.length_mm;
        let gone: Vec<u32> = self
            .parts
            .iter()
            .map(|s| &s.part)
            .filter(|p| p.state == PartState::OnBelt && p.x() >= end - GEOM_EPS)
            .map(|p| p.id)
            .collect();
        for id in gone {
            self.set_part_state(id, PartState::PassedThrough);
        }
    }

    fn reschedule_belt(&mut self) {
        if !self.belt_dirty {
            return;
        }
        self.belt_dirty = false;
        self.belt_gen += 1;
        let parts = self.part_states();
        if let Some(dt) = time_to_next_edge(&self.conveyor, &parts) {
            let at = self.now_us + ((dt * 1e6).ceil() as u64).max(1);
            let gen = self.belt_gen;
            self.schedule(at, Wake::Belt { gen });
        }
        self.try_feed();
    }

    fn robot_words(&self, phase: RobotPhase, fault: bool) -> Words {
        let mut a = TagAssembly::new(Direction::RobotToPlc);
        for (idx, sink) in ROBOT_DO_WIRING {
            if let DoSink::Assembly(name) = sink {
                if self.dos.get(idx).copied().unwrap_or(false) {
                    a.set(name, true).expect("wired alias exists");
                }
            }
        }
        let set = |a: &mut TagAssembly, n: &str| a.set(n, true).expect("status alias exists");
        if fault {
            set(&mut a, "Fault");
        }
        if self.robot_enabled() {
            set(&mut a, "Cmd enabled");
            set(&mut a, "System ready");
            if matches!(
                phase,
                RobotPhase::Scanning | RobotPhase::Sorting | RobotPhase::Bench
            ) {
                set(&mut a, "Prg running");
            }
        } else {
            set(&mut a, "Prg paused");
            set(&mut a, "Motion held");
        }
        a.words
    }
}

impl RobotEnv for World {
    fn write_do(&mut self, index: u16, value: bool) -> Result<(), FaultCause> {
        let prev = self.dos.insert(index, value).unwrap_or(false);
        self.emit(
            Node::Robot,
            EventKind::TagChange {
                tag: format!("DO[{index}]"),
                prev: Some(TagValue::Bool(prev)),
                value: TagValue::Bool(value),
            },
        );
        match do_sink(index) {
            Some(DoSink::ArduinoInputA | DoSink::ArduinoInputB) => {
                let (a, b) = self.robot_do_levels();
                self.set_arduino_inputs(a, b);
            }
            Some(DoSink::Suction) => {
                if value {
                    self.pick();
                } else {
                    self.release()?;
                }
            }
            Some(DoSink::Assembly("Conveyor fwd")) if self.plc.is_none() => {
                // no controller on a bench cell: the output drives the motor
                self.set_belt_running(value);
            }
            _ => {}
        }
        Ok(())
    }

    fn read_di(&self, index: u16) -> bool {
        if self.bus.is_none() {
            return self.bench_di.get(&index).copied().unwrap_or(false);
        }
        index == REMOVE_PART_DI && self.delivered_to_robot().bit(REMOVE_PART_DI_SOURCE)
    }

    fn run_find(&mut self, process: &str) -> Result<VisionRegister, FaultCause> {
        let proc_ = self
            .params
            .vision
            .process(process)
            .ok_or_else(|| FaultCause::UnknownProcess(process.to_string()))?;
        let wheel = self.wheel_state_at(self.now_us);
        let optics = &self.params.optics;
        let filter_name = wheel.filter();
        let position = if wheel.settled() {
            FilterPosition::Settled(optics.filter(filter_name))
        } else {
            FilterPosition::Moving {
                actual_deg: wheel.servo_actual_angle_deg,
                commanded_deg: wheel.commanded_angle_deg,
            }
        };
        let light = optics.led_light(wheel.led_rgb);
        let blocks = self
            .parts
            .iter()
            .map(|s| &s.part)
            .filter(|p| p.state == PartState::OnBelt)
            .map(|p| SceneBlock {
                reflectance: match filter_name.channel() {
                    Some(ch) => apply_edge_leak(p, ch, &optics.edge_leak),
                    None => p.reflectance,
                },
                center_mm: p.position_mm,
                size_mm: p.size_mm,
                rotation_deg: p.rotation_deg,
            })
            .collect();
        let scene = Scene {
            belt: optics.belt,
            camera_x_mm: self.conveyor.camera_window_x_mm,
            blocks,
        };
        let image = render(&scene, position, &light, &self.params.camera)?;
        let reg = run_find(&proc_, &image, &self.params.camera).map_err(FaultCause::Vision)?;
        self.emit(
            Node::Robot,
            EventKind::VisionResult {
                process: process.to_string(),
                found: reg.found,
                x_mm: reg.x_mm,
                y_mm: reg.y_mm,
                rz_deg: reg.rz_deg,
            },
        );
        Ok(reg)
    }

    fn tool_pose(&self) -> Pose {
        self.pose
    }

    fn start_motion(&mut self, target: Pose, duration_us: u64) -> Result<(), FaultCause> {
        self.motion_target = Some(target);
        self.emit(
            Node::Robot,
            EventKind::MotionStart {
                target,
                duration_us,
            },
        );
        Ok(())
    }

    fn finish_motion(&mut self) -> Result<(), FaultCause> {
        if let Some(target) = self.motion_target.take() {
            self.pose = target;
            if let Some(id) = self.held {
                if let Some(p) = self.part_mut(id) {
                    p.position_mm = (target.x, target.y);
                }
            }
            self.emit(Node::Robot, EventKind::MotionEnd { pose: target });
        }
        Ok(())
    }

    fn on_statement(&mut self, index: usize, statement: &TpStatement) {
        let program = self.program_name.clone().unwrap_or_default();
        self.emit(
            Node::Robot,
            EventKind::Statement {
                program,
                index,
                text: statement.to_string(),
            },
        );
    }
}

/// Read-only view of the robot controller.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RobotView {
    pub phase: RobotPhase,
    pub program: Option<String>,
    /// Zero-based index of the next statement.
    pub statement_index: Option<usize>,
    pub pose: Pose,
    pub held_part: Option<u32>,
    pub fault: Option<String>,
    pub digital_outputs: BTreeMap<u16, bool>,
}

/// Read-only view of the filter wheel and LED ring.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ArduinoView {
    pub input_a: Level,
    pub input_b: Level,
    pub commanded_angle_deg: f64,
    pub actual_angle_deg: f64,
    pub led_rgb: [u8; 3],
}

/// The closed-loop cell, or a bench cell with only the robot, filter
/// wheel and belt.
pub struct Engine {
    w: World,
    scanpart: Arc<TpProgram>,
    sortpart: Arc<TpProgram>,
    interp: Option<Interpreter>,
    regs: Registers,
    phase: RobotPhase,
    busy_until_us: u64,
    fault: Option<RuntimeFault>,
    halt_on_fault: bool,
    schedule: Vec<ScheduledPart>,
    operator: Vec<Command>,
    stopped: Option<SimError>,
}

impl Engine {
    fn build(params: CellParams, plc: Option<Arc<LadderProgram>>) -> Result<Self, SimError> {
        params.validate()?;
        let conveyor = ConveyorState::from_params(&params.conveyor);
        let rb = &params.reject_bin;
        let bin = RejectBin::new((rb.x_mm, rb.y_mm), rb.radius_mm);
        let arduino = ArduinoState::default();
        let home = params.robot.home;
        let (plc, bus) = match plc {
            Some(program) => {
                let plc =
                    Plc::new(program).map_err(|e: LadderError| ConfigError::new(e.to_string()))?;
                let mut bus = Bus::new(
                    u64::from(params.bus.rpi_ms) * 1000,
                    u64::from(params.bus.extra_latency_ms) * 1000,
                );
                bus.register(Direction::RobotToPlc);
                bus.register(Direction::PlcToRobot);
                (
                    Some(PlcNode {
                        plc,
                        pending: VecDeque::new(),
                        momentary: Vec::new(),
                    }),
                    Some(bus),
                )
            }
            None => (None, None),
        };
        let w = World {
            now_us: 0,
            queue: BinaryHeap::new(),
            wake_seq: 0,
            events: Vec::new(),
            event_seq: 0,
            conveyor,
            odometer_us: 0,
            odo_updated_us: 0,
            parts: Vec::new(),
            next_part_id: 1,
            beam: false,
            beam_part: None,
            belt_gen: 0,
            belt_dirty: false,
            feeder: VecDeque::new(),
            feeder_gen: 0,
            bin,
            wheel: Wheel {
                from_deg: arduino.servo_actual_angle_deg,
                state: arduino,
                from_us: 0,
            },
            wheel_gen: 0,
            dos: BTreeMap::new(),
            bench_di: BTreeMap::new(),
            pose: home,
            motion_target: None,
            held: None,
            program_name: None,
            plc,
            bus,
            last_progress_us: 0,
            beam_rise_us: BTreeMap::new(),
            present_part: None,
            verdict_latencies: Vec::new(),
            cycle_times: Vec::new(),
            verdicts: 0,
            misclassifications: 0,
            scans: 0,
            params,
        };
        Ok(Engine {
            w,
            scanpart: Arc::new(tp::scanpart()),
            sortpart: Arc::new(tp::sortpart()),
            interp: None,
            regs: Registers::default(),
            phase: RobotPhase::Idle,
            busy_until_us: 0,
            fault: None,
            halt_on_fault: true,
            schedule: Vec::new(),
            operator: Vec::new(),
            stopped: None,
        })
    }

    /// Closed-loop cell running the shipped ladder program.
    pub fn new(scenario: &Scenario) -> Result<Self, SimError> {
        Self::with_program(scenario, Arc::new(default_program()))
    }

    pub fn with_program(
        scenario: &Scenario,
        program: Arc<LadderProgram>,
    ) -> Result<Self, SimError> {
        scenario.validate()?;
        let mut e = Self::build(scenario.params.clone(), Some(program))?;
        e.w.schedule(0, Wake::BusTick);
        e.w.schedule(0, Wake::PlcScan);
        e.schedule = scenario.schedule();
        for i in 0..e.schedule.len() {
            let at = e.schedule[i].at_us;
            e.w.schedule(at, Wake::Spawn(i));
        }
        let f = scenario.selected;
        let node = e.w.plc.as_mut().expect("closed loop");
        node.pending.push_back(Command::SelectColors {
            r: f.red,
            g: f.green,
            b: f.blue,
        });
        node.pending.push_back(Command::SetOverride {
            enabled: scenario.override_enabled,
        });
        if scenario.auto_start {
            node.pending.push_back(Command::Start);
        }
        for (i, a) in scenario.operator.iter().enumerate() {
            e.operator.push(a.command.clone());
            e.w.schedule(secs_to_us(a.at_s), Wake::Operator(i));
        }
        Ok(e)
    }

    /// Robot, filter wheel and belt only. Programs are started by hand and
    /// the conveyor output drives the belt motor directly.
    pub fn bench(params: CellParams) -> Result<Self, SimError> {
        Self::build(params, None)
    }

    /// Keep running after a robot fault; the fault is latched until a fault
    /// reset reaches the robot.
    pub fn latch_faults(&mut self) {
        self.halt_on_fault = false;
    }

    pub fn now_us(&self) -> u64 {
        self.w.now_us
    }

    pub fn params(&self) -> &CellParams {
        &self.w.params
    }

    pub fn events(&self) -> &[SimEvent] {
        &self.w.events
    }

    pub fn into_events(self) -> Vec<SimEvent> {
        self.w.events
    }

    pub fn parts(&self) -> Vec<Part> {
        self.w.part_states()
    }

    pub fn conveyor(&self) -> &ConveyorState {
        &self.w.conveyor
    }

    pub fn beam_blocked(&self) -> bool {
        self.w.beam
    }

    pub fn reject_bin(&self) -> &RejectBin {
        &self.w.bin
    }

    pub fn plc(&self) -> Option<&Plc> {
        self.w.plc.as_ref().map(|n| &n.plc)
    }

    /// Consumer-side images of both assemblies.
    pub fn assemblies(&self) -> Option<(TagAssembly, TagAssembly)> {
        self.w.bus.as_ref().map(|b| {
            (
                b.delivered(Direction::RobotToPlc),
                b.delivered(Direction::PlcToRobot),
            )
        })
    }

    pub fn robot(&self) -> RobotView {
        RobotView {
            phase: self.phase,
            program: self.interp.as_ref().map(|i| i.program().name.clone()),
            statement_index: self.interp.as_ref().map(|i| i.pc()),
            pose: self.w.pose,
            held_part: self.w.held,
            fault: self.fault.as_ref().map(|f| f.to_string()),
            digital_outputs: self.w.dos.clone(),
        }
    }

    pub fn arduino(&self) -> ArduinoView {
        let s = self.w.wheel_state_at(self.w.now_us);
        ArduinoView {
            input_a: s.input_a,
            input_b: s.input_b,
            commanded_angle_deg: s.commanded_angle_deg,
            actual_angle_deg: s.servo_actual_angle_deg,
            led_rgb: s.led_rgb,
        }
    }

    pub fn registers(&self) -> &Registers {
        &self.regs
    }

    /// Queues an operator command for the next controller scan.
    pub fn submit(&mut self, command: Command) -> Result<(), ConfigError> {
        let node = self
            .w
            .plc
            .as_mut()
            .ok_or_else(|| ConfigError::new("a bench cell has no operator panel"))?;
        node.pending.push_back(command);
        Ok(())
    }

    // ---- bench helpers ----

    /// Puts a part straight onto the belt at `(x, y)`.
    pub fn place_part(&mut self, color: ColorClass, x_mm: f64, y_mm: f64, rz_deg: f64) -> u32 {
        let refl = self
            .w
            .params
            .optics
            .block(color)
            .unwrap_or(self.w.params.optics.belt);
        self.place_part_with(color, refl, x_mm, y_mm, rz_deg)
    }

    pub fn place_part_with(
        &mut self,
        color: ColorClass,
        reflectance: crate::color::Rgb,
        x_mm: f64,
        y_mm: f64,
        rz_deg: f64,
    ) -> u32 {
        let saved = self.w.params.conveyor.spawn_x_mm;
        self.w.params.conveyor.spawn_x_mm = x_mm;
        let id = self.w.next_part_id;
        self.w.spawn(ScheduledPart {
            at_us: self.w.now_us,
            color,
            reflectance,
            y_mm,
            rz_deg,
        });
        self.w.params.conveyor.spawn_x_mm = saved;
        self.settle_world();
        id
    }

    pub fn set_di(&mut self, index: u16, value: bool) {
        self.w.bench_di.insert(index, value);
    }

    pub fn set_vision_register(&mut self, n: u16, reg: VisionRegister) {
        if let Some(slot) = usize::from(n)
            .checked_sub(1)
            .and_then(|i| self.regs.vr.get_mut(i))
        {
            *slot = reg;
        }
    }

    /// Runs `program` to completion on a bench cell.
    pub fn run_program(&mut self, program: &TpProgram) -> Result<(), SimError> {
        if self.w.plc.is_some() {
            return Err(ConfigError::new(
                "programs are dispatched by the controller in a closed-loop cell",
            )
            .into());
        }
        self.start_program(Arc::new(program.clone()), RobotPhase::Bench);
        self.w.schedule(self.w.now_us, Wake::Robot);
        while self.phase == RobotPhase::Bench {
            let Some(Reverse(next)) = self.w.queue.peek().copied() else {
                return Err(SimError::DeadlockDetected {
                    time_s: self.w.now_us as f64 / 1e6,
                    reason: "bench program stalled with nothing scheduled".into(),
                });
            };
            self.step_until(next.t_us)?;
        }
        if let Some(f) = self.fault.clone() {
            return Err(f.into());
        }
        Ok(())
    }

    // ---- scheduling ----

    /// Processes every wake at or before `t_us`, then sets the clock to
    /// `t_us`. Calling twice with the same time is a no-op.
    pub fn step_until(&mut self, t_us: u64) -> Result<(), SimError> {
        if let Some(e) = &self.stopped {
            return Err(e.clone());
        }
        while let Some(Reverse(next)) = self.w.queue.peek().copied() {
            if next.t_us > t_us {
                break;
            }
            self.w.queue.pop();
            self.w.advance_to(next.t_us);
            if let Err(e) = self.handle(next.wake) {
                self.stopped = Some(e.clone());
                return Err(e);
            }
            self.settle_world();
            if let Err(e) = self.watchdog() {
                self.stopped = Some(e.clone());
                return Err(e);
            }
        }
        if t_us > self.w.now_us {
            self.w.advance_to(t_us);
        }
        Ok(())
    }

    fn settle_world(&mut self) {
        self.w.check_passthrough();
        self.w.check_beam();
        self.w.reschedule_belt();
    }

    fn watchdog(&mut self) -> Result<(), SimError> {
        let Some(node) = &self.w.plc else {
            return Ok(());
        };
        let active = !self.w.feeder.is_empty()
            || self
                .w
                .parts
                .iter()
                .any(|s| matches!(s.part.state, PartState::OnBelt | PartState::HeldByRobot));
        if !node.plc.tag("Enable") || !active || self.fault.is_some() {
            self.w.last_progress_us = self.w.now_us;
            return Ok(());
        }
        let limit = secs_to_us(self.w.params.engine.stall_timeout_s);
        if self.w.now_us - self.w.last_progress_us >= limit {
            return Err(SimError::DeadlockDetected {
                time_s: self.w.now_us as f64 / 1e6,
                reason: format!(
                    "no part, beam or program progress for {} s while enabled with parts in the cell",
                    self.w.params.engine.stall_timeout_s
                ),
            });
        }
        Ok(())
    }

    fn handle(&mut self, wake: Wake) -> Result<(), SimError> {
        match wake {
            Wake::BusTick => {
                let robot_out = self.w.robot_words(self.phase, self.fault.is_some());
                let plc_out = self
                    .w
                    .plc
                    .as_ref()
                    .map(|n| n.plc.output_words())
                    .unwrap_or_default();
                let now = self.w.now_us;
                let bus = self.w.bus.as_mut().expect("closed loop");
                let due = bus
                    .cyclic_exchange(now, &robot_out, &plc_out)
                    .map_err(|e| ConfigError::new(e.to_string()))?;
                let rpi = bus.rpi_us;
                if due > now {
                    self.w.schedule(due, Wake::BusDeliver);
                }
                self.deliver();
                self.w.schedule(self.w.now_us + rpi, Wake::BusTick);
            }
            Wake::BusDeliver => self.deliver(),
            Wake::PlcScan => self.plc_scan(),
            Wake::Robot => self.robot_wake()?,
            Wake::ArduinoSettled { gen } => {
                if gen == self.w.wheel_gen {
                    let s = self.w.wheel_state_at(self.w.now_us);
                    self.w.emit(
                        Node::Arduino,
                        EventKind::TagChange {
                            tag: "servo_angle".into(),
                            prev: None,
                            value: TagValue::Number(s.servo_actual_angle_deg),
                        },
                    );
                }
            }
            Wake::Belt { gen } => {
                if gen == self.w.belt_gen {
                    self.w.belt_dirty = true;
                }
            }
            Wake::Spawn(i) => {
                let spec = self.schedule[i].clone();
                self.w.feeder.push_back(spec);
                self.w.try_feed();
            }
            Wake::FeederRetry { gen } => {
                if gen == self.w.feeder_gen {
                    self.w.try_feed();
                }
            }
            Wake::Operator(i) => {
                let cmd = self.operator[i].clone();
                if let Some(node) = &mut self.w.plc {
                    node.pending.push_back(cmd);
                }
            }
        }
        Ok(())
    }

    fn deliver(&mut self) {
        let Some(bus) = self.w.bus.as_mut() else {
            return;
        };
        let deliveries = bus.deliver_due(self.w.now_us);
        for d in deliveries {
            if !d.changed {
                continue;
            }
            let view = TagAssembly {
                direction: d.direction,
                words: d.words,
            }
            .view();
            self.w.emit(
                Node::Bus,
                EventKind::TagChange {
                    tag: d.direction.plc_prefix().to_string(),
                    prev: None,
                    value: TagValue::Assembly {
                        words: view.words,
                        bits: view.bits,
                    },
                },
            );
            match d.direction {
                Direction::RobotToPlc => {
                    if let Some(node) = &mut self.w.plc {
                        node.plc.apply_robot_words(&d.words);
                    }
                }
                Direction::PlcToRobot => self.w.schedule(self.w.now_us, Wake::Robot),
            }
        }
    }

    fn apply_command(&mut self, cmd: Command) {
        self.w.emit(
            Node::Operator,
            EventKind::Operator {
                command: cmd.clone(),
            },
        );
        let node = self.w.plc.as_mut().expect("closed loop");
        let plc = &mut node.plc;
        match cmd {
            Command::Start => {
                plc.set_input("HMI_Start", true);
                node.momentary.push("HMI_Start");
            }
            Command::Stop => {
                plc.set_input("HMI_Stop", true);
                node.momentary.push("HMI_Stop");
            }
            Command::FaultReset => {
                plc.set_input("Fault_Reset_PB", true);
                node.momentary.push("Fault_Reset_PB");
            }
            Command::SelectColors { r, g, b } => {
                plc.set_input("HMI_Red_Sel", r);
                plc.set_input("HMI_Green_Sel", g);
                plc.set_input("HMI_Blue_Sel", b);
            }
            Command::SetOverride { enabled } => plc.set_input("HMI_Override", enabled),
            Command::SpawnPart { color, y_offset } => {
                let reflectance = self
                    .w
                    .params
                    .optics
                    .block(color)
                    .unwrap_or(self.w.params.optics.belt);
                self.w.feeder.push_back(ScheduledPart {
                    at_us: self.w.now_us,
                    color,
                    reflectance,
                    y_mm: y_offset,
                    rz_deg: 0.0,
                });
                self.w.try_feed();
            }
        }
    }

    fn selection(plc: &Plc) -> (ColorFlags, bool) {
        let sel = |pb: &str, hmi: &str| plc.tag(pb) || plc.tag(hmi);
        (
            ColorFlags::new(
                sel("Red_Sel_PB", "HMI_Red_Sel"),
                sel("Green_Sel_PB", "HMI_Green_Sel"),
                sel("Blue_Sel_PB", "HMI_Blue_Sel"),
            ),
            plc.tag("HMI_Override"),
        )
    }

    fn plc_scan(&mut self) {
        let pending: Vec<Command> = self
            .w
            .plc
            .as_mut()
            .map(|n| n.pending.drain(..).collect())
            .unwrap_or_default();
        for cmd in pending {
            self.apply_command(cmd);
        }
        let node = self.w.plc.as_mut().expect("closed loop");
        let period = self.w.params.plc.scan_period_us();
        let before = (
            node.plc.tag("Robot_Part_Match"),
            node.plc.tag("Robot_Remove_Program"),
        );
        let changes = node.plc.scan(period);
        for m in node.momentary.drain(..) {
            node.plc.set_input(m, false);
        }
        let named: Vec<(String, bool)> = changes
            .iter()
            .map(|c| (node.plc.tag_name(c.slot).to_string(), c.value))
            .collect();
        let running = node.plc.tag("Conveyor_Run");
        let after = (
            node.plc.tag("Robot_Part_Match"),
            node.plc.tag("Robot_Remove_Program"),
        );
        let detected = ColorFlags::new(
            node.plc.try_tag("Robot_Red").unwrap_or(false),
            node.plc.try_tag("Robot_Green").unwrap_or(false),
            node.plc.try_tag("Robot_Blue").unwrap_or(false),
        );
        let (selected, override_enabled) = Self::selection(&node.plc);
        for (tag, value) in named {
            self.w.emit(
                Node::Plc,
                EventKind::TagChange {
                    tag,
                    prev: None,
                    value: TagValue::Bool(value),
                },
            );
        }
        self.w.set_belt_running(running);
        let issued = if after.0 && !before.0 {
            Some(Verdict::PartMatch)
        } else if after.1 && !before.1 {
            Some(Verdict::Remove)
        } else {
            None
        };
        if let Some(v) = issued {
            let part = self.w.present_part;
            self.w.verdicts += 1;
            if let Some(id) = part {
                if let Some(t0) = self.w.beam_rise_us.get(&id) {
                    self.w
                        .verdict_latencies
                        .push((self.w.now_us - t0) as f64 / 1e6);
                }
                if let Some(p) = self.w.part(id) {
                    let truth = p
                        .color_class
                        .channel()
                        .map(ColorFlags::only)
                        .unwrap_or(ColorFlags::NONE);
                    if verdict(truth, selected, false) != v {
                        self.w.misclassifications += 1;
                    }
                }
            }
            self.w.emit(
                Node::Plc,
                EventKind::VerdictIssued {
                    part,
                    detected,
                    selected,
                    override_enabled,
                    verdict: v,
                },
            );
        }
        self.w.schedule(self.w.now_us + period, Wake::PlcScan);
    }

    fn start_program(&mut self, program: Arc<TpProgram>, phase: RobotPhase) {
        let name = program.name.clone();
        if phase == RobotPhase::Scanning {
            self.w.scans += 1;
        }
        self.w.program_name = Some(name.clone());
        self.w
            .emit(Node::Robot, EventKind::ProgramStart { program: name });
        self.interp = Some(Interpreter::new(program));
        self.phase = phase;
    }

    fn robot_wake(&mut self) -> Result<(), SimError> {
        let now = self.w.now_us;
        if self.fault.is_some() {
            if self.w.delivered_to_robot().bit("Fault Reset") {
                self.fault = None;
                self.w.emit(Node::Robot, EventKind::FaultCleared);
            }
            return Ok(());
        }
        if now < self.busy_until_us {
            return Ok(());
        }
        loop {
            let closed = self.w.plc.is_some();
            let cmd = self.w.delivered_to_robot();
            let enabled = self.w.robot_enabled();
            match self.phase {
                RobotPhase::Idle => {
                    if closed && enabled && cmd.bit("Scan Program") {
                        self.start_program(self.scanpart.clone(), RobotPhase::Scanning);
                        continue;
                    }
                    return Ok(());
                }
                RobotPhase::AwaitVerdict => {
                    if enabled && (cmd.bit("Part match") || cmd.bit("Remove Program")) {
                        self.start_program(self.sortpart.clone(), RobotPhase::Sorting);
                        continue;
                    }
                    return Ok(());
                }
                RobotPhase::Scanning | RobotPhase::Sorting | RobotPhase::Bench => {
                    let interp = self.interp.as_mut().expect("program running");
                    if let Err(f) = interp.settle(&mut self.w) {
                        return self.robot_fault(f);
                    }
                    if !enabled {
                        // paused at a statement boundary
                        return Ok(());
                    }
                    match interp.step(&self.w.params.robot.clone(), &mut self.regs, &mut self.w) {
                        Ok(Step::Busy { duration_us: 0 }) => continue,
                        Ok(Step::Busy { duration_us }) => {
                            self.busy_until_us = now + duration_us;
                            self.w.schedule(self.busy_until_us, Wake::Robot);
                            return Ok(());
                        }
                        Ok(Step::Completed) => {
                            let name = interp.program().name.clone();
                            self.w
                                .emit(Node::Robot, EventKind::ProgramEnd { program: name });
                            self.interp = None;
                            self.w.program_name = None;
                            self.phase = match self.phase {
                                RobotPhase::Scanning => RobotPhase::AwaitVerdict,
                                RobotPhase::Sorting => {
                                    if let Some(id) = self.w.present_part {
                                        if let Some(t0) = self.w.beam_rise_us.get(&id) {
                                            self.w.cycle_times.push((now - t0) as f64 / 1e6);
                                        }
                                    }
                                    RobotPhase::Idle
                                }
                                _ => RobotPhase::Idle,
                            };
                            continue;
                        }
                        Err(f) => return self.robot_fault(f),
                    }
                }
            }
        }
    }

    fn robot_fault(&mut self, fault: RuntimeFault) -> Result<(), SimError> {
        self.w.emit(
            Node::Robot,
            EventKind::RobotFault {
                message: fault.to_string(),
            },
        );
        self.interp = None;
        self.w.program_name = None;
        self.phase = RobotPhase::Idle;
        self.fault = Some(fault.clone());
        if self.halt_on_fault {
            return Err(SimError::RobotFault(fault));
        }
        Ok(())
    }

    pub fn metrics(&self) -> Metrics {
        let mut kept = ColorCounts::default();
        let mut removed = ColorCounts::default();
        let (mut on_belt, mut held) = (0, 0);
        for s in &self.w.parts {
            match s.part.state {
                PartState::PassedThrough => kept.bump(s.part.color_class),
                PartState::InRejectBin => removed.bump(s.part.color_class),
                PartState::OnBelt => on_belt += 1,
                PartState::HeldByRobot => held += 1,
            }
        }
        Metrics {
            end_time_s: self.w.now_us as f64 / 1e6,
            parts_spawned: self.w.parts.len() as u32,
            kept,
            removed,
            on_belt,
            held,
            waiting_at_feeder: self.w.feeder.len() as u32,
            scans: self.w.scans,
            verdicts: self.w.verdicts,
            misclassifications: self.w.misclassifications,
            mean_cycle_time_s: mean(&self.w.cycle_times),
            min_verdict_latency_s: self.w.verdict_latencies.iter().copied().reduce(f64::min),
            mean_verdict_latency_s: mean(&self.w.verdict_latencies),
        }
    }
}

/// Result of a batch run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub events: Vec<SimEvent>,
    pub metrics: Metrics,
}

/// Runs a scenario for its full duration.
pub fn run(scenario: &Scenario) -> Result<RunOutput, SimError> {
    let mut e = Engine::new(scenario)?;
    e.step_until(scenario.duration_us())?;
    let metrics = e.metrics();
    Ok(RunOutput {
        events: e.into_events(),
        metrics,
    })
}

/// Runs the scan program on a bench cell holding one part at the camera
/// center plus the given lateral offset, and returns the color outputs.
pub fn scan_cycle_sequence(
    params: &CellParams,
    color: ColorClass,
    y_mm: f64,
) -> Result<(ColorFlags, Vec<SimEvent>), SimError> {
    let mut e = Engine::bench(params.clone())?;
    if color != ColorClass::Unknown {
        let x = params.conveyor.camera_x_mm;
        e.place_part(color, x, y_mm, 0.0);
    }
    e.run_program(&tp::scanpart())?;
    let on = |i: u16| e.w.dos.get(&i).copied().unwrap_or(false);
    let flags = ColorFlags::new(on(123), on(124), on(125));
    Ok((flags, e.into_events()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::PartSpec;

    fn part(at_s: f64, color: ColorClass) -> PartSpec {
        PartSpec {
            at_s,
            color,
            y_mm: 0.0,
            rz_deg: 0.0,
            reflectance: None,
        }
    }

    fn scenario(selected: ColorFlags, parts: Vec<PartSpec>, duration_s: f64) -> Scenario {
        let mut s = Scenario::new(duration_s);
        s.selected = selected;
        s.parts = parts;
        s
    }

    #[test]
    fn selected_part_passes_and_other_is_removed() {
        let s = scenario(
            ColorFlags::new(true, false, false),
            vec![part(0.0, ColorClass::Red), part(2.4, ColorClass::Green)],
            60.0,
        );
        let out = run(&s).unwrap();
        let m = &out.metrics;
        assert_eq!(m.kept.red, 1, "{m:?}");
        assert_eq!(m.removed.green, 1, "{m:?}");
        assert_eq!(m.misclassifications, 0);
        assert_eq!(m.verdicts, 2);
    }

    #[test]
    fn bench_scan_reports_part_color() {
        let p = CellParams::default();
        for (class, want) in [
            (ColorClass::Red, ColorFlags::new(true, false, false)),
            (ColorClass::Green, ColorFlags::new(false, true, false)),
            (ColorClass::Blue, ColorFlags::new(false, false, true)),
            (ColorClass::Unknown, ColorFlags::NONE),
        ] {
            let (flags, _) = scan_cycle_sequence(&p, class, 0.0).unwrap();
            assert_eq!(flags, want, "{class:?}");
        }
    }

    #[test]
    fn slicing_does_not_change_the_trace() {
        let s = scenario(
            ColorFlags::new(false, true, false),
            vec![part(0.0, ColorClass::Blue), part(3.0, ColorClass::Green)],
            30.0,
        );
        let whole = run(&s).unwrap().events;
        let mut e = Engine::new(&s).unwrap();
        let mut t = 0;
        while t < s.duration_us() {
            t = (t + 7_331).min(s.duration_us());
            e.step_until(t).unwrap();
        }
        assert_eq!(e.events(), &whole[..]);
    }

    #[test]
    fn stop_pauses_robot_and_belt() {
        let mut s = scenario(
            ColorFlags::new(true, true, true),
            vec![part(0.0, ColorClass::Red)],
            20.0,
        );
        s.operator.push(crate::sim::OperatorAction {
            at_s: 3.0,
            command: Command::Stop,
        });
        let mut e = Engine::new(&s).unwrap();
        e.step_until(20_000_000).unwrap();
        assert!(!e.conveyor().running);
        let (r2p, _) = e.assemblies().unwrap();
        assert!(r2p.bit("Prg paused") && r2p.bit("Motion held"));
    }

    #[test]
    fn bench_drop_outside_bin_faults() {
        let mut e = Engine::bench(CellParams::default()).unwrap();
        e.place_part(ColorClass::Red, 580.0, 0.0, 0.0);
        let prog = tp::parse(
            "/PROG DROP\n/MN\n 1:  L PR[80] 500mm/sec FINE ;\n 2:  DO[111]=ON ;\n 3:  L P[1] 500mm/sec FINE ;\n 4:  L PR[80] 500mm/sec FINE ;\n 5:  DO[111]=OFF ;\n/END\n",
        )
        .unwrap();
        let err = e.run_program(&prog).unwrap_err();
        assert!(matches!(
            err,
            SimError::RobotFault(RuntimeFault {
                cause: FaultCause::DropOutsideBin { .. },
                ..
            })
        ));
    }

    #[test]
    fn idle_cell_with_parts_and_no_start_never_deadlocks() {
        let mut s = scenario(ColorFlags::NONE, vec![part(0.0, ColorClass::Red)], 120.0);
        s.auto_start = false;
        let out = run(&s).unwrap();
        assert_eq!(out.metrics.on_belt, 1);
    }
}
