//! Point-robot navigation among circular obstacles and solid walls.
//!
//! Velocity-controlled single integrator `p' = p + u·dt`, with the commanded
//! speed clamped to `max_speed`. Circles are soft (penalized only); wall
//! segments are solid: a step whose path crosses one keeps only its
//! component along that wall, and is cancelled if even that collides.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EnvState, Environment, StageCostTerms, StepOutcome};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

impl Segment {
    pub fn distance(&self, p: [f64; 2]) -> f64 {
        let d = [self.b[0] - self.a[0], self.b[1] - self.a[1]];
        let len2 = d[0] * d[0] + d[1] * d[1];
        let t = if len2 == 0.0 {
            0.0
        } else {
            (((p[0] - self.a[0]) * d[0] + (p[1] - self.a[1]) * d[1]) / len2).clamp(0.0, 1.0)
        };
        norm([p[0] - self.a[0] - t * d[0], p[1] - self.a[1] - t * d[1]])
    }

    /// Whether the closed segment `p → q` touches this segment.
    pub fn intersects(&self, p: [f64; 2], q: [f64; 2]) -> bool {
        fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
            (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        }
        fn on_segment(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> bool {
            c[0] >= a[0].min(b[0]) && c[0] <= a[0].max(b[0]) && c[1] >= a[1].min(b[1]) && c[1] <= a[1].max(b[1])
        }
        let (d1, d2) = (orient(self.a, self.b, p), orient(self.a, self.b, q));
        let (d3, d4) = (orient(p, q, self.a), orient(p, q, self.b));
        if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
            return true;
        }
        (d1 == 0.0 && on_segment(self.a, self.b, p))
            || (d2 == 0.0 && on_segment(self.a, self.b, q))
            || (d3 == 0.0 && on_segment(p, q, self.a))
            || (d4 == 0.0 && on_segment(p, q, self.b))
    }
}

fn norm(v: [f64; 2]) -> f64 {
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}

/// Solid wall layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Barrier {
    None,
    /// Square of half-size `half_size` centred on the start, with one gap of
    /// `gap_width` in a side perpendicular to the start→goal direction (side
    /// picked by the seed).
    Box { half_size: f64, gap_width: f64 },
    /// Full-height wall at `x = position` with a gap of `gap_width` centred
    /// at `y = gap_center`.
    Wall { position: f64, gap_center: f64, gap_width: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Nav2dConfig {
    /// Side length of the square workspace, metres.
    pub workspace: f64,
    pub n_obstacles: usize,
    pub radius_min: f64,
    pub radius_max: f64,
    pub start: [f64; 2],
    pub goal: [f64; 2],
    /// Per-seed uniform jitter radius applied to start and goal.
    pub start_jitter: f64,
    pub goal_jitter: f64,
    pub barrier: Barrier,
    pub w_task: f64,
    pub w_obs: f64,
    pub w_ctl: f64,
    pub r_safe: f64,
    pub max_speed: f64,
    pub dt: f64,
}

impl Default for Nav2dConfig {
    fn default() -> Self {
        Self {
            workspace: 10.0,
            n_obstacles: 25,
            radius_min: 0.2,
            radius_max: 0.6,
            start: [1.0, 1.0],
            goal: [9.0, 9.0],
            start_jitter: 0.0,
            goal_jitter: 0.0,
            barrier: Barrier::None,
            w_task: 1.0,
            w_obs: 10.0,
            w_ctl: 0.01,
            r_safe: 0.3,
            max_speed: 4.0,
            dt: 0.1,
        }
    }
}

impl Nav2dConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("env.workspace", self.workspace),
            ("env.max_speed", self.max_speed),
            ("env.dt", self.dt),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{key} must be positive, got {v}")));
            }
        }
        if !(self.radius_min > 0.0 && self.radius_max >= self.radius_min) {
            return Err(Error::Config(format!(
                "obstacle radius range must satisfy 0 < min <= max, got ({}, {})",
                self.radius_min, self.radius_max
            )));
        }
        if [self.w_task, self.w_obs, self.w_ctl, self.r_safe, self.start_jitter, self.goal_jitter]
            .iter()
            .any(|v| *v < 0.0 || !v.is_finite())
        {
            return Err(Error::Config("nav2d weights, r_safe and jitters must be >= 0".into()));
        }
        match self.barrier {
            Barrier::Box { half_size, gap_width } => {
                if gap_width.is_nan() || gap_width <= 0.0 || half_size.is_nan() || half_size <= 0.0 || gap_width >= 2.0 * half_size {
                    return Err(Error::Config(format!(
                        "box barrier needs 0 < gap_width < 2·half_size, got gap {gap_width}, half size {half_size}"
                    )));
                }
            }
            Barrier::Wall { gap_width, .. } => {
                if gap_width.is_nan() || gap_width <= 0.0 {
                    return Err(Error::Config(format!("wall gap width must be > 0, got {gap_width}")));
                }
            }
            Barrier::None => {}
        }
        Ok(())
    }
}

#[derive(Debug)]
struct World {
    goal: [f64; 2],
    obstacles: Vec<Circle>,
    walls: Vec<Segment>,
    w_task: f64,
    w_obs: f64,
    w_ctl: f64,
    r_safe: f64,
    max_speed: f64,
    dt: f64,
}

#[derive(Debug, Clone)]
pub struct Nav2d {
    world: Arc<World>,
    state: EnvState,
}

fn disk_jitter(rng: &mut ChaCha8Rng, radius: f64) -> [f64; 2] {
    if radius == 0.0 {
        return [0.0, 0.0];
    }
    let r = radius * rng.random::<f64>().sqrt();
    let a = std::f64::consts::TAU * rng.random::<f64>();
    [r * a.cos(), r * a.sin()]
}

fn box_walls(center: [f64; 2], goal: [f64; 2], half: f64, gap: f64, flip: bool) -> Vec<Segment> {
    let [cx, cy] = center;
    let corners = [[cx - half, cy - half], [cx + half, cy - half], [cx + half, cy + half], [cx - half, cy + half]];
    // Sides in order: bottom, right, top, left. Outward normals.
    let normals = [[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]];
    let to_goal = [goal[0] - cx, goal[1] - cy];
    let facing = (0..4)
        .max_by(|&i, &j| {
            let di = normals[i][0] * to_goal[0] + normals[i][1] * to_goal[1];
            let dj = normals[j][0] * to_goal[0] + normals[j][1] * to_goal[1];
            di.total_cmp(&dj)
        })
        .unwrap();
    let gap_side = if flip { (facing + 1) % 4 } else { (facing + 3) % 4 };
    let mut walls = Vec::with_capacity(5);
    for side in 0..4 {
        let (a, b) = (corners[side], corners[(side + 1) % 4]);
        if side == gap_side {
            let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
            let dir = [(b[0] - a[0]) / (2.0 * half), (b[1] - a[1]) / (2.0 * half)];
            let g = gap / 2.0;
            walls.push(Segment { a, b: [mid[0] - dir[0] * g, mid[1] - dir[1] * g] });
            walls.push(Segment { a: [mid[0] + dir[0] * g, mid[1] + dir[1] * g], b });
        } else {
            walls.push(Segment { a, b });
        }
    }
    walls
}

impl Nav2d {
    pub fn reset(config: &Nav2dConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let js = disk_jitter(&mut rng, config.start_jitter);
        let jg = disk_jitter(&mut rng, config.goal_jitter);
        let start = [config.start[0] + js[0], config.start[1] + js[1]];
        let goal = [config.goal[0] + jg[0], config.goal[1] + jg[1]];

        let walls = match config.barrier {
            Barrier::None => Vec::new(),
            Barrier::Box { half_size, gap_width } => {
                let flip = rng.random::<bool>();
                box_walls(config.start, goal, half_size, gap_width, flip)
            }
            Barrier::Wall { position, gap_center, gap_width } => {
                let w = config.workspace;
                let (lo, hi) = (gap_center - gap_width / 2.0, gap_center + gap_width / 2.0);
                vec![
                    Segment { a: [position, 0.0], b: [position, lo] },
                    Segment { a: [position, hi], b: [position, w] },
                ]
            }
        };

        let w = config.workspace;
        let mut obstacles = Vec::with_capacity(config.n_obstacles);
        for i in 0..config.n_obstacles {
            let mut placed = None;
            for _ in 0..100 {
                let radius = rng.random_range(config.radius_min..=config.radius_max);
                let lo = radius.min(w / 2.0);
                let center = [rng.random_range(lo..=w - lo), rng.random_range(lo..=w - lo)];
                let clear = |p: [f64; 2]| norm([p[0] - center[0], p[1] - center[1]]) > radius + config.r_safe;
                if clear(start) && clear(goal) {
                    placed = Some(Circle { center, radius });
                    break;
                }
            }
            match placed {
                Some(c) => obstacles.push(c),
                None => {
                    return Err(Error::Config(format!(
                        "could not place obstacle {i} clear of start and goal after 100 retries"
                    )))
                }
            }
        }

        let world = World {
            goal,
            obstacles,
            walls,
            w_task: config.w_task,
            w_obs: config.w_obs,
            w_ctl: config.w_ctl,
            r_safe: config.r_safe,
            max_speed: config.max_speed,
            dt: config.dt,
        };
        let state = EnvState { x: start.to_vec(), k: 0, rng_cursor: rng.get_word_pos() as u64 };
        Ok(Self { world: Arc::new(world), state })
    }

    pub fn position(&self) -> [f64; 2] {
        [self.state.x[0], self.state.x[1]]
    }

    pub fn goal(&self) -> [f64; 2] {
        self.world.goal
    }

    pub fn obstacles(&self) -> &[Circle] {
        &self.world.obstacles
    }

    pub fn walls(&self) -> &[Segment] {
        &self.world.walls
    }

    pub fn max_speed(&self) -> f64 {
        self.world.max_speed
    }

    /// Unweighted obstacle penalty `Σ hinge(r_safe − distance)²` at `p`.
    pub fn obstacle_penalty(&self, p: [f64; 2]) -> f64 {
        let r = self.world.r_safe;
        let hinge = |d: f64| (r - d).max(0.0).powi(2);
        let circles: f64 = self
            .world
            .obstacles
            .iter()
            .map(|c| hinge(norm([p[0] - c.center[0], p[1] - c.center[1]]) - c.radius))
            .sum();
        let walls: f64 = self.world.walls.iter().map(|s| hinge(s.distance(p))).sum();
        circles + walls
    }

    fn resolve_walls(&self, p: [f64; 2], q: [f64; 2]) -> [f64; 2] {
        let walls = &self.world.walls;
        let Some(hit) = walls.iter().find(|w| w.intersects(p, q)) else {
            return q;
        };
        let t = [hit.b[0] - hit.a[0], hit.b[1] - hit.a[1]];
        let len2 = t[0] * t[0] + t[1] * t[1];
        if len2 == 0.0 {
            return p;
        }
        let along = ((q[0] - p[0]) * t[0] + (q[1] - p[1]) * t[1]) / len2;
        let slid = [p[0] + along * t[0], p[1] + along * t[1]];
        if walls.iter().any(|w| w.intersects(p, slid)) {
            p
        } else {
            slid
        }
    }

    pub fn stage_terms(&self, p: [f64; 2], u: [f64; 2]) -> StageCostTerms {
        let g = self.world.goal;
        let dx = [p[0] - g[0], p[1] - g[1]];
        StageCostTerms {
            task: self.world.w_task * (dx[0] * dx[0] + dx[1] * dx[1]),
            obstacle: self.world.w_obs * self.obstacle_penalty(p),
            control: self.world.w_ctl * (u[0] * u[0] + u[1] * u[1]),
        }
    }
}

impl Environment for Nav2d {
    fn control_dim(&self) -> usize {
        2
    }

    fn dt(&self) -> f64 {
        self.world.dt
    }

    fn state(&self) -> &EnvState {
        &self.state
    }

    fn set_state(&mut self, state: EnvState) {
        self.state = state;
    }

    fn step(&mut self, u: &[f64]) -> Result<StepOutcome> {
        let mut v = [u[0], u[1]];
        let speed = norm(v);
        let clamped = speed > self.world.max_speed;
        if clamped {
            let s = self.world.max_speed / speed;
            v = [v[0] * s, v[1] * s];
        }
        let p = self.position();
        let q = [p[0] + v[0] * self.world.dt, p[1] + v[1] * self.world.dt];
        if !(q[0].is_finite() && q[1].is_finite()) {
            return Err(Error::SimulationFault { step: self.state.k as usize, reason: "non-finite position".into() });
        }
        let next = self.resolve_walls(p, q);
        self.state.x[0] = next[0];
        self.state.x[1] = next[1];
        self.state.k += 1;
        let terms = self.stage_terms(next, v);
        Ok(StepOutcome { reward: terms.reward(), terms, clamped })
    }

    fn observation(&self) -> Vec<f64> {
        let p = self.position();
        let g = self.world.goal;
        vec![p[0], p[1], g[0] - p[0], g[1] - p[1]]
    }

    fn task_error(&self) -> f64 {
        let p = self.position();
        let g = self.world.goal;
        norm([p[0] - g[0], p[1] - g[1]])
    }
}
