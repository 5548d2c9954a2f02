//! Deterministic point-mass task families. Each family samples tasks that
//! differ only in one parameter (goal position, run direction, target
//! speed); dynamics are pure functions of (task, state, action) so rollouts
//! can be replayed and parallelized freely.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Which point-mass family a task belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    /// 2-D navigation to a sampled goal; state is the position.
    Nav2D,
    /// Locomotion along a sampled axis direction; state is [position, velocity].
    PointDir,
    /// Locomotion at a sampled target speed; state is [position, velocity].
    PointVel,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Nav2D => "nav2d",
            FamilyKind::PointDir => "point_dir",
            FamilyKind::PointVel => "point_vel",
        }
    }
}

/// Family-level constants plus the sampling ranges for task parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskFamily {
    pub kind: FamilyKind,
    pub horizon: usize,
    /// Per-coordinate action clip applied inside `step`.
    pub action_bound: f64,
    pub dt: f64,
    pub ctrl_cost: f64,
    /// Nav2D success radius.
    pub goal_eps: f64,
    /// Nav2D goal box (both axes).
    pub goal_low: f64,
    pub goal_high: f64,
    /// PointVel target-speed interval.
    pub speed_low: f64,
    pub speed_high: f64,
}

impl TaskFamily {
    pub fn nav2d() -> Self {
        TaskFamily {
            kind: FamilyKind::Nav2D,
            horizon: 50,
            action_bound: 0.1,
            dt: 0.1,
            ctrl_cost: 0.05,
            goal_eps: 0.01,
            goal_low: -0.5,
            goal_high: 0.5,
            speed_low: 0.0,
            speed_high: 1.0,
        }
    }

    pub fn point_dir() -> Self {
        TaskFamily { kind: FamilyKind::PointDir, action_bound: 1.0, ..TaskFamily::nav2d() }
    }

    pub fn point_vel() -> Self {
        TaskFamily { kind: FamilyKind::PointVel, action_bound: 1.0, ..TaskFamily::nav2d() }
    }

    pub fn state_dim(&self) -> usize {
        match self.kind {
            FamilyKind::Nav2D => 2,
            FamilyKind::PointDir | FamilyKind::PointVel => 4,
        }
    }

    pub fn action_dim(&self) -> usize {
        2
    }
}

/// The parameter that distinguishes one task from another in its family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TaskParam {
    NavGoal([f64; 2]),
    /// Unit direction, +x or -x.
    Direction([f64; 2]),
    TargetSpeed(f64),
}

/// A fully sampled task: family constants plus its own parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskSpec {
    pub family: TaskFamily,
    pub param: TaskParam,
}

/// One environment step's outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

fn uniform(rng: &mut ChaCha8Rng, low: f64, high: f64) -> f64 {
    if low == high {
        low
    } else {
        rng.random_range(low..high)
    }
}

/// Samples `n` tasks from the family's parameter distribution.
pub fn sample_task_batch(family: &TaskFamily, n: usize, rng: &mut ChaCha8Rng) -> Vec<TaskSpec> {
    (0..n)
        .map(|_| {
            let param = match family.kind {
                FamilyKind::Nav2D => TaskParam::NavGoal([
                    uniform(rng, family.goal_low, family.goal_high),
                    uniform(rng, family.goal_low, family.goal_high),
                ]),
                FamilyKind::PointDir => {
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    TaskParam::Direction([sign, 0.0])
                }
                FamilyKind::PointVel => {
                    TaskParam::TargetSpeed(uniform(rng, family.speed_low, family.speed_high))
                }
            };
            TaskSpec { family: *family, param }
        })
        .collect()
}

/// Initial state: the origin (zero velocity for the locomotion families).
pub fn reset(task: &TaskSpec) -> Vec<f64> {
    vec![0.0; task.family.state_dim()]
}

fn clip(v: f64, bound: f64) -> f64 {
    v.clamp(-bound, bound)
}

/// Pure dynamics: same inputs always give the same transition. Actions are
/// clipped per-coordinate to the family bound before they touch the state;
/// control costs are charged on the clipped action.
pub fn step(task: &TaskSpec, state: &[f64], action: &[f64]) -> Transition {
    let fam = &task.family;
    assert_eq!(state.len(), fam.state_dim(), "state dimension mismatch");
    assert_eq!(action.len(), fam.action_dim(), "action dimension mismatch");
    let a = [clip(action[0], fam.action_bound), clip(action[1], fam.action_bound)];
    match (fam.kind, &task.param) {
        (FamilyKind::Nav2D, TaskParam::NavGoal(goal)) => {
            let pos = [state[0] + fam.dt * a[0], state[1] + fam.dt * a[1]];
            let dx = pos[0] - goal[0];
            let dy = pos[1] - goal[1];
            let dist_sq = dx * dx + dy * dy;
            Transition {
                next_state: pos.to_vec(),
                reward: -dist_sq,
                done: dist_sq.sqrt() < fam.goal_eps,
            }
        }
        (FamilyKind::PointDir, TaskParam::Direction(dir)) => {
            let vel = a;
            let pos = [state[0] + fam.dt * vel[0], state[1] + fam.dt * vel[1]];
            let fwd = vel[0] * dir[0] + vel[1] * dir[1];
            let cost = fam.ctrl_cost * (a[0] * a[0] + a[1] * a[1]);
            Transition {
                next_state: vec![pos[0], pos[1], vel[0], vel[1]],
                reward: fwd - cost,
                done: false, // locomotion tasks run to the horizon
            }
        }
        (FamilyKind::PointVel, TaskParam::TargetSpeed(target)) => {
            let vel = a;
            let pos = [state[0] + fam.dt * vel[0], state[1] + fam.dt * vel[1]];
            let speed = (vel[0] * vel[0] + vel[1] * vel[1]).sqrt();
            let cost = fam.ctrl_cost * (a[0] * a[0] + a[1] * a[1]);
            Transition {
                next_state: vec![pos[0], pos[1], vel[0], vel[1]],
                reward: -(speed - target).abs() - cost,
                done: false,
            }
        }
        _ => panic!("task parameter does not match family kind"),
    }
}

/// Writes a task batch as CSV: family, task index, parameter components.
pub fn write_task_batch_csv<W: Write>(tasks: &[TaskSpec], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "family,task_index,p0,p1")?;
    for (i, t) in tasks.iter().enumerate() {
        let (p0, p1) = match t.param {
            TaskParam::NavGoal([x, y]) => (x, y),
            TaskParam::Direction([x, y]) => (x, y),
            TaskParam::TargetSpeed(s) => (s, 0.0),
        };
        writeln!(w, "{},{},{},{}", t.family.kind.name(), i, p0, p1)?;
    }
    Ok(())
}
