//! Statement-at-a-time execution of parsed robot programs.
//!
//! The interpreter owns only the program counter and a pending motion. All
//! I/O, vision and kinematics go through [`RobotEnv`], so the same
//! interpreter drives the closed-loop engine and standalone bench runs.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ast::{Target, TpProgram, TpStatement};
use super::parse::{PR_COUNT, VR_COUNT};
use crate::error::{ConfigError, FaultCause, RuntimeFault};
use crate::vision::VisionRegister;

/// Cartesian tool pose in the user frame: mm and degrees about z.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub rz: f64,
}

impl Pose {
    pub const fn new(x: f64, y: f64, z: f64, rz: f64) -> Self {
        Pose { x, y, z, rz }
    }

    pub fn distance(&self, other: &Pose) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2))
            .sqrt()
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({:.3}, {:.3}, {:.3}, {:.3})",
            self.x, self.y, self.z, self.rz
        )
    }
}

/// Kinematic and timing constants of the robot controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotParams {
    /// Duration of every joint move, whatever its speed percentage.
    pub joint_move_s: f64,
    /// Processing time added by each `VISION RUN_FIND`.
    pub vision_time_ms: f64,
    /// Suction grips a part only when the tool is this close to its center.
    pub pick_tolerance_mm: f64,
    /// Tool pose at power-on.
    pub home: Pose,
    /// Program-local positions `P[n]`.
    #[serde(with = "index_keys")]
    pub positions: BTreeMap<u16, Pose>,
    /// Position registers `PR[n]`.
    #[serde(with = "index_keys")]
    pub position_registers: BTreeMap<u16, Pose>,
    pub workspace_min: Pose,
    pub workspace_max: Pose,
}

/// Register maps keyed by index. Keys are written as strings so the map
/// survives formats that only allow string keys.
mod index_keys {
    use std::collections::BTreeMap;

    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::Pose;

    pub fn serialize<S: Serializer>(map: &BTreeMap<u16, Pose>, s: S) -> Result<S::Ok, S::Error> {
        map.iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect::<BTreeMap<String, Pose>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<u16, Pose>, D::Error> {
        BTreeMap::<String, Pose>::deserialize(d)?
            .into_iter()
            .map(|(k, v)| {
                k.parse::<u16>()
                    .map(|k| (k, v))
                    .map_err(|_| D::Error::custom(format!("register index '{k}' is not a number")))
            })
            .collect()
    }
}

impl Default for RobotParams {
    fn default() -> Self {
        let drop = Pose::new(580.0, 300.0, 150.0, 0.0);
        RobotParams {
            joint_move_s: 2.0,
            vision_time_ms: 50.0,
            pick_tolerance_mm: 10.0,
            home: drop,
            positions: BTreeMap::from([(1, drop)]),
            position_registers: BTreeMap::from([
                (80, Pose::new(580.0, 0.0, 40.0, 0.0)),
                (81, Pose::new(0.0, 0.0, 100.0, 0.0)),
            ]),
            workspace_min: Pose::new(200.0, -450.0, 0.0, -360.0),
            workspace_max: Pose::new(1000.0, 450.0, 600.0, 360.0),
        }
    }
}

impl RobotParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.joint_move_s > 0.0) {
            return Err(ConfigError::new("robot.joint_move_s must be positive"));
        }
        if !(self.vision_time_ms >= 0.0) {
            return Err(ConfigError::new("robot.vision_time_ms must be nonnegative"));
        }
        if !(self.pick_tolerance_mm >= 0.0) {
            return Err(ConfigError::new(
                "robot.pick_tolerance_mm must be nonnegative",
            ));
        }
        if let Some(n) = self
            .position_registers
            .keys()
            .find(|n| !(1..=PR_COUNT).contains(*n))
        {
            return Err(ConfigError::new(format!(
                "robot.position_registers: PR[{n}] out of range"
            )));
        }
        if !self.in_workspace(&self.home) {
            return Err(ConfigError::new("robot.home lies outside the workspace"));
        }
        Ok(())
    }

    pub fn in_workspace(&self, p: &Pose) -> bool {
        let (lo, hi) = (&self.workspace_min, &self.workspace_max);
        (lo.x..=hi.x).contains(&p.x) && (lo.y..=hi.y).contains(&p.y) && (lo.z..=hi.z).contains(&p.z)
    }

    pub fn vision_time_us(&self) -> u64 {
        (self.vision_time_ms * 1000.0).round() as u64
    }
}

/// Controller register file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registers {
    /// `VR[1..=10]`, stored zero-based.
    pub vr: [VisionRegister; VR_COUNT as usize],
    /// Result of the most recent `RUN_FIND` per process.
    pub vision_results: BTreeMap<String, VisionRegister>,
}

impl Default for Registers {
    fn default() -> Self {
        Registers {
            vr: [VisionRegister::default(); VR_COUNT as usize],
            vision_results: BTreeMap::new(),
        }
    }
}

impl Registers {
    pub fn vr(&self, n: u16) -> Option<&VisionRegister> {
        self.vr.get(usize::from(n).checked_sub(1)?)
    }
}

/// Everything outside the interpreter a statement can touch.
pub trait RobotEnv {
    fn write_do(&mut self, index: u16, value: bool) -> Result<(), FaultCause>;
    fn read_di(&self, index: u16) -> bool;
    /// Acquires a frame through the current filter and light and runs the
    /// named process on it.
    fn run_find(&mut self, process: &str) -> Result<VisionRegister, FaultCause>;
    fn tool_pose(&self) -> Pose;
    fn start_motion(&mut self, target: Pose, duration_us: u64) -> Result<(), FaultCause>;
    /// The motion begun by `start_motion` has reached its target.
    fn finish_motion(&mut self) -> Result<(), FaultCause>;
    fn on_statement(&mut self, _index: usize, _statement: &TpStatement) {}
}

/// Simulated time source for [`execute`].
pub trait Clock {
    fn advance(&mut self, duration_us: u64);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    /// One statement ran; the next may start after `duration_us`.
    Busy {
        duration_us: u64,
    },
    Completed,
}

#[derive(Debug, Clone)]
pub struct Interpreter {
    program: Arc<TpProgram>,
    pc: usize,
    motion_pending: bool,
    finished: bool,
}

fn secs_to_us(s: f64) -> u64 {
    (s * 1e6).round() as u64
}

impl Interpreter {
    pub fn new(program: Arc<TpProgram>) -> Self {
        Interpreter {
            program,
            pc: 0,
            motion_pending: false,
            finished: false,
        }
    }

    pub fn program(&self) -> &TpProgram {
        &self.program
    }

    /// Index of the next statement to run.
    pub fn pc(&self) -> usize {
        self.pc
    }

    pub fn finished(&self) -> bool {
        self.finished
    }

    fn fault(&self, statement: usize, cause: FaultCause) -> RuntimeFault {
        RuntimeFault {
            program: self.program.name.clone(),
            statement,
            cause,
        }
    }

    /// Completes any motion still in flight from the previous statement.
    pub fn settle(&mut self, env: &mut dyn RobotEnv) -> Result<(), RuntimeFault> {
        if self.motion_pending {
            self.motion_pending = false;
            let at = self.pc.saturating_sub(1);
            env.finish_motion().map_err(|c| self.fault(at, c))?;
        }
        Ok(())
    }

    /// Runs the next statement.
    pub fn step(
        &mut self,
        params: &RobotParams,
        regs: &mut Registers,
        env: &mut dyn RobotEnv,
    ) -> Result<Step, RuntimeFault> {
        self.settle(env)?;
        if self.finished {
            return Ok(Step::Completed);
        }
        let Some(stmt) = self.program.statements.get(self.pc).cloned() else {
            self.finished = true;
            return Ok(Step::Completed);
        };
        let at = self.pc;
        env.on_statement(at, &stmt);
        self.pc += 1;
        let mut duration_us = 0;
        let name = &self.program.name.clone();
        let fault = |cause| RuntimeFault {
            program: name.clone(),
            statement: at,
            cause,
        };
        match &stmt {
            TpStatement::SetDo { index, value, .. } => {
                env.write_do(*index, *value).map_err(fault)?
            }
            TpStatement::Wait { seconds } => duration_us = secs_to_us(*seconds),
            TpStatement::VisionRunFind { process } => {
                let reg = env.run_find(process).map_err(fault)?;
                regs.vision_results.insert(process.clone(), reg);
                duration_us = params.vision_time_us();
            }
            TpStatement::VisionGetOffset {
                process,
                vr_index,
                jump_label,
            } => {
                let result = *regs
                    .vision_results
                    .get(process)
                    .ok_or_else(|| fault(FaultCause::VisionNotRun(process.clone())))?;
                if result.found {
                    let slot = usize::from(*vr_index)
                        .checked_sub(1)
                        .and_then(|i| regs.vr.get_mut(i))
                        .ok_or_else(|| {
                            fault(FaultCause::MissingRegister(format!("VR[{vr_index}]")))
                        })?;
                    *slot = result;
                } else {
                    self.pc = self.jump_target(*jump_label).map_err(fault)?;
                }
            }
            TpStatement::Label { .. }
            | TpStatement::SetUFrame { .. }
            | TpStatement::SetUTool { .. } => {}
            TpStatement::Jump { n } => self.pc = self.jump_target(*n).map_err(fault)?,
            TpStatement::IfDiJump {
                di,
                value,
                jump_label,
            } => {
                if env.read_di(di.index) == *value {
                    self.pc = self.jump_target(*jump_label).map_err(fault)?;
                }
            }
            TpStatement::MotionJoint { target, .. } => {
                let pose = resolve_target(params, target).map_err(fault)?;
                check_workspace(params, &pose).map_err(fault)?;
                duration_us = secs_to_us(params.joint_move_s);
                env.start_motion(pose, duration_us).map_err(fault)?;
                self.motion_pending = true;
            }
            TpStatement::MotionLinear {
                target,
                speed_mm_s,
                voffset_vr,
                offset_pr,
                ..
            } => {
                let mut pose = resolve_target(params, target).map_err(fault)?;
                if let Some(n) = voffset_vr {
                    let vr = regs
                        .vr(*n)
                        .ok_or_else(|| fault(FaultCause::MissingRegister(format!("VR[{n}]"))))?;
                    pose.x += vr.x_mm;
                    pose.y += vr.y_mm;
                    pose.rz += vr.rz_deg;
                }
                if let Some(pr) = offset_pr {
                    let off = lookup_pr(params, pr.index).map_err(fault)?;
                    pose.x += off.x;
                    pose.y += off.y;
                    pose.z += off.z;
                }
                check_workspace(params, &pose).map_err(fault)?;
                duration_us = secs_to_us(env.tool_pose().distance(&pose) / speed_mm_s);
                env.start_motion(pose, duration_us).map_err(fault)?;
                self.motion_pending = true;
            }
        }
        Ok(Step::Busy { duration_us })
    }

    fn jump_target(&self, n: u16) -> Result<usize, FaultCause> {
        self.program.label(n).ok_or(FaultCause::UnknownLabel(n))
    }
}

fn lookup_pr(params: &RobotParams, n: u16) -> Result<Pose, FaultCause> {
    params
        .position_registers
        .get(&n)
        .copied()
        .ok_or_else(|| FaultCause::MissingRegister(format!("PR[{n}]")))
}

fn resolve_target(params: &RobotParams, target: &Target) -> Result<Pose, FaultCause> {
    match target {
        Target::P(n) => params
            .positions
            .get(n)
            .copied()
            .ok_or_else(|| FaultCause::MissingRegister(format!("P[{n}]"))),
        Target::Pr(r) => lookup_pr(params, r.index),
    }
}

fn check_workspace(params: &RobotParams, pose: &Pose) -> Result<(), FaultCause> {
    if params.in_workspace(pose) {
        Ok(())
    } else {
        Err(FaultCause::OutsideWorkspace(pose.to_string()))
    }
}

/// Runs a program to completion, advancing `env`'s clock by each
/// statement's duration. Returns the elapsed time in microseconds.
pub fn execute<E: RobotEnv + Clock>(
    program: Arc<TpProgram>,
    params: &RobotParams,
    regs: &mut Registers,
    env: &mut E,
) -> Result<u64, RuntimeFault> {
    let mut interp = Interpreter::new(program);
    let mut elapsed = 0;
    loop {
        match interp.step(params, regs, env)? {
            Step::Busy { duration_us } => {
                env.advance(duration_us);
                elapsed += duration_us;
            }
            Step::Completed => return Ok(elapsed),
        }
    }
}
