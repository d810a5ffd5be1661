//! Slippery grasping grid: move the gripper to the object cell without
//! touching an obstacle.
//!
//! Cells are `(x, y)` with `0 <= x < width`, `0 <= y < height`; the state
//! index of a cell is `y * width + x`. Moves that would leave the grid are
//! not legal actions. With probability `p_slip` a move deviates to one of
//! the two perpendicular directions (split evenly); a deviation that would
//! leave the grid keeps the gripper in place. Entering the object cell ends
//! the episode with `success_reward`, entering an obstacle ends it with
//! `collision_reward`, every other move costs `step_reward`.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use crate::mdp::StateHandle;
use crate::reward::{Domain, FeatureMap, Heuristic, RuleValidator};
use crate::tabular::{Outcome, TabularEnv, TabularMdp};

use super::SpecError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    pub fn manhattan(&self, other: &Cell) -> usize {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    North,
    South,
    East,
    West,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::North,
        Direction::South,
        Direction::East,
        Direction::West,
    ];

    fn delta(self) -> (isize, isize) {
        match self {
            Direction::North => (0, 1),
            Direction::South => (0, -1),
            Direction::East => (1, 0),
            Direction::West => (-1, 0),
        }
    }

    fn perpendicular(self) -> [Direction; 2] {
        match self {
            Direction::North | Direction::South => [Direction::East, Direction::West],
            Direction::East | Direction::West => [Direction::North, Direction::South],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridGraspSpec {
    pub width: usize,
    pub height: usize,
    pub obstacles: BTreeSet<Cell>,
    pub object_cell: Cell,
    pub start_cell: Cell,
    pub p_slip: f64,
    pub discount: f64,
    pub step_reward: f64,
    pub success_reward: f64,
    pub collision_reward: f64,
}

impl GridGraspSpec {
    /// Obstacle-free grid, start at the origin, object in the far corner.
    pub fn open(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            obstacles: BTreeSet::new(),
            object_cell: Cell::new(width.saturating_sub(1), height.saturating_sub(1)),
            start_cell: Cell::new(0, 0),
            p_slip: 0.0,
            discount: 0.95,
            step_reward: -0.01,
            success_reward: 1.0,
            collision_reward: -1.0,
        }
    }

    /// The 8x8 cluttered workspace used by the experiments: the object sits
    /// behind a partial wall with scattered clutter on the way.
    pub fn obstacle_course() -> Self {
        let mut spec = Self::open(8, 8);
        spec.obstacles = OBSTACLE_COURSE.iter().map(|&(x, y)| Cell::new(x, y)).collect();
        spec
    }

    pub fn with_slip(mut self, p_slip: f64) -> Self {
        self.p_slip = p_slip;
        self
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.width < 2 || self.height < 2 {
            return Err(SpecError::new(format!(
                "grid must be at least 2x2, got {}x{}",
                self.width, self.height
            )));
        }
        for (what, cell) in [("object", self.object_cell), ("start", self.start_cell)] {
            if !self.in_bounds(cell) {
                return Err(SpecError::new(format!("{what} cell {cell} out of bounds")));
            }
            if self.obstacles.contains(&cell) {
                return Err(SpecError::new(format!("{what} cell {cell} is an obstacle")));
            }
        }
        if let Some(c) = self.obstacles.iter().find(|c| !self.in_bounds(**c)) {
            return Err(SpecError::new(format!("obstacle {c} out of bounds")));
        }
        if !(0.0..1.0).contains(&self.p_slip) {
            return Err(SpecError::new(format!("p_slip {} outside [0, 1)", self.p_slip)));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(SpecError::new(format!("discount {} outside (0, 1]", self.discount)));
        }
        if ![self.step_reward, self.success_reward, self.collision_reward]
            .iter()
            .all(|r| r.is_finite())
        {
            return Err(SpecError::new("rewards must be finite"));
        }
        Ok(())
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.x < self.width && cell.y < self.height
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn index_of(&self, cell: Cell) -> usize {
        cell.y * self.width + cell.x
    }

    pub fn cell_of(&self, index: usize) -> Cell {
        Cell::new(index % self.width, index / self.width)
    }

    fn shift(&self, cell: Cell, dir: Direction) -> Option<Cell> {
        let (dx, dy) = dir.delta();
        let x = cell.x.checked_add_signed(dx)?;
        let y = cell.y.checked_add_signed(dy)?;
        let next = Cell::new(x, y);
        self.in_bounds(next).then_some(next)
    }

    pub fn is_terminal_cell(&self, cell: Cell) -> bool {
        cell == self.object_cell || self.obstacles.contains(&cell)
    }

    /// Legal move directions of a cell in action-index order; empty for
    /// terminal cells.
    pub fn legal_directions(&self, cell: Cell) -> Vec<Direction> {
        if self.is_terminal_cell(cell) {
            return Vec::new();
        }
        Direction::ALL
            .into_iter()
            .filter(|d| self.shift(cell, *d).is_some())
            .collect()
    }

    fn reward_for(&self, next: Cell) -> f64 {
        if next == self.object_cell {
            self.success_reward
        } else if self.obstacles.contains(&next) {
            self.collision_reward
        } else {
            self.step_reward
        }
    }

    /// Default episode length: 4 * (width + height).
    pub fn episode_limit(&self) -> usize {
        4 * (self.width + self.height)
    }
}

const OBSTACLE_COURSE: &[(usize, usize)] = &[
    (2, 1),
    (2, 2),
    (5, 2),
    (4, 4),
    (5, 4),
    (6, 4),
    (1, 5),
    (2, 5),
    (6, 6),
];

/// Tabular grid environment.
pub fn make_grid(spec: &GridGraspSpec) -> Result<TabularEnv, SpecError> {
    spec.validate()?;
    let n = spec.n_cells();
    let mut terminal = vec![false; n];
    let mut transitions = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for index in 0..n {
        let cell = spec.cell_of(index);
        labels.push(cell.to_string());
        terminal[index] = spec.is_terminal_cell(cell);
        let actions = spec
            .legal_directions(cell)
            .into_iter()
            .map(|dir| {
                let intended = spec.shift(cell, dir).expect("legal direction stays in bounds");
                let mut outcomes = vec![Outcome {
                    next: spec.index_of(intended),
                    prob: 1.0 - spec.p_slip,
                    reward: spec.reward_for(intended),
                }];
                if spec.p_slip > 0.0 {
                    for side in dir.perpendicular() {
                        let landed = spec.shift(cell, side).unwrap_or(cell);
                        outcomes.push(Outcome {
                            next: spec.index_of(landed),
                            prob: spec.p_slip / 2.0,
                            reward: spec.reward_for(landed),
                        });
                    }
                }
                outcomes
            })
            .collect();
        transitions.push(actions);
    }
    let start = spec.index_of(spec.start_cell);
    let mdp = TabularMdp::new(spec.discount, start, terminal, transitions)
        .map_err(|e| SpecError::new(e.to_string()))?;
    Ok(
        TabularEnv::new(format!("grid{}x{}", spec.width, spec.height), mdp)
            .with_labels(labels)
            .with_goals(&[spec.index_of(spec.object_cell)]),
    )
}

/// Invalid exactly on obstacle (collision) cells.
#[derive(Debug, Clone)]
pub struct GridRules {
    blocked: Vec<bool>,
}

impl RuleValidator for GridRules {
    fn is_valid(&self, state: &StateHandle) -> bool {
        !self.blocked.get(state.index()).copied().unwrap_or(false)
    }
}

pub fn grid_rule_validator(spec: &GridGraspSpec) -> GridRules {
    let mut blocked = vec![false; spec.n_cells()];
    for c in &spec.obstacles {
        blocked[spec.index_of(*c)] = true;
    }
    GridRules { blocked }
}

/// `1 - manhattan(cell, object) / (width + height)`.
#[derive(Debug, Clone)]
pub struct GridHeuristic {
    width: usize,
    object: Cell,
    scale: f64,
}

impl Heuristic for GridHeuristic {
    fn score(&self, state: &StateHandle) -> f64 {
        let cell = Cell::new(state.index() % self.width, state.index() / self.width);
        1.0 - cell.manhattan(&self.object) as f64 / self.scale
    }
}

pub fn grid_heuristic(spec: &GridGraspSpec) -> GridHeuristic {
    GridHeuristic {
        width: spec.width,
        object: spec.object_cell,
        scale: (spec.width + spec.height) as f64,
    }
}

/// `[x/w, y/h, (ox - x)/w, (oy - y)/h]`.
#[derive(Debug, Clone)]
pub struct GridFeatures {
    width: usize,
    height: usize,
    object: Cell,
}

impl FeatureMap for GridFeatures {
    fn dim(&self) -> usize {
        4
    }

    fn write_features(&self, state: &StateHandle, out: &mut [f64]) {
        let (x, y) = (state.index() % self.width, state.index() / self.width);
        let (w, h) = (self.width as f64, self.height as f64);
        out[0] = x as f64 / w;
        out[1] = y as f64 / h;
        out[2] = (self.object.x as f64 - x as f64) / w;
        out[3] = (self.object.y as f64 - y as f64) / h;
    }
}

pub fn grid_features(spec: &GridGraspSpec) -> GridFeatures {
    GridFeatures {
        width: spec.width,
        height: spec.height,
        object: spec.object_cell,
    }
}

pub fn grid_domain(spec: &GridGraspSpec) -> Domain {
    Domain {
        rules: Some(Arc::new(grid_rule_validator(spec))),
        heuristic: Some(Arc::new(grid_heuristic(spec))),
        features: Some(Arc::new(grid_features(spec))),
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::mdp::{ActionId, Environment, SimRng};

    fn handle(env: &TabularEnv, spec: &GridGraspSpec, x: usize, y: usize) -> StateHandle {
        env.state(spec.index_of(Cell::new(x, y))).unwrap()
    }

    #[test]
    fn interior_cell_has_four_actions() {
        let spec = GridGraspSpec::open(8, 8);
        let env = make_grid(&spec).unwrap();
        assert_eq!(env.legal_actions(&handle(&env, &spec, 3, 3)).unwrap().len(), 4);
        assert_eq!(env.legal_actions(&handle(&env, &spec, 0, 0)).unwrap().len(), 2);
        assert_eq!(env.legal_actions(&handle(&env, &spec, 0, 3)).unwrap().len(), 3);
        assert!(env.legal_actions(&handle(&env, &spec, 7, 7)).unwrap().is_empty());
    }

    #[test]
    fn moving_into_obstacle_fails() {
        let mut spec = GridGraspSpec::open(4, 4);
        spec.obstacles.insert(Cell::new(1, 0));
        let env = make_grid(&spec).unwrap();
        let mut rng = SimRng::seed_from_u64(0);
        let east = spec
            .legal_directions(Cell::new(0, 0))
            .iter()
            .position(|d| *d == Direction::East)
            .unwrap();
        let t = env
            .sample_transition(&handle(&env, &spec, 0, 0), ActionId(east), &mut rng)
            .unwrap();
        assert!(t.terminal);
        assert_eq!(t.env_reward, -1.0);
        assert!(!grid_rule_validator(&spec).is_valid(&t.next_state));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = GridGraspSpec::open(8, 8);
        spec.obstacles.insert(spec.object_cell);
        assert!(make_grid(&spec).is_err());
        let mut spec = GridGraspSpec::open(8, 8);
        spec.start_cell = Cell::new(8, 0);
        assert!(make_grid(&spec).is_err());
        assert!(make_grid(&GridGraspSpec::open(1, 5)).is_err());
        assert!(make_grid(&GridGraspSpec::open(3, 3).with_slip(1.0)).is_err());
        assert!(make_grid(&GridGraspSpec::obstacle_course()).is_ok());
    }

    #[test]
    fn perpendicular_deviation_rate() {
        let spec = GridGraspSpec::open(8, 8).with_slip(0.3);
        let env = make_grid(&spec).unwrap();
        let s = handle(&env, &spec, 3, 3);
        let north = ActionId(0);
        let mut rng = SimRng::seed_from_u64(9);
        let n = 100_000;
        let mut deviated = 0;
        for _ in 0..n {
            let next = env.sample_transition(&s, north, &mut rng).unwrap().next_state;
            let c = spec.cell_of(next.index());
            if c != Cell::new(3, 4) {
                assert_eq!(c.y, 3);
                deviated += 1;
            }
        }
        let frac = deviated as f64 / n as f64;
        assert!((frac - 0.3).abs() < 0.01, "{frac}");
    }

    #[test]
    fn heuristic_values() {
        let spec = GridGraspSpec::open(8, 8);
        let env = make_grid(&spec).unwrap();
        let h = grid_heuristic(&spec);
        assert_eq!(h.score(&handle(&env, &spec, 7, 7)), 1.0);
        assert_eq!(h.score(&handle(&env, &spec, 0, 0)), 0.125);
        assert_eq!(h.score(&handle(&env, &spec, 3, 3)), 0.5);
        assert_eq!(
            h.score(&handle(&env, &spec, 7, 3)),
            h.score(&handle(&env, &spec, 3, 7))
        );
    }

    #[test]
    fn heuristic_strictly_increases_toward_object() {
        let spec = GridGraspSpec::open(8, 8);
        let env = make_grid(&spec).unwrap();
        let h = grid_heuristic(&spec);
        for i in 0..spec.n_cells() {
            let c = spec.cell_of(i);
            let here = h.score(&handle(&env, &spec, c.x, c.y));
            if c != spec.object_cell {
                assert!(here < 1.0);
            }
            for d in [Direction::North, Direction::East] {
                if let Some(n) = spec.shift(c, d) {
                    assert!(h.score(&handle(&env, &spec, n.x, n.y)) > here);
                }
            }
        }
    }

    #[test]
    fn feature_values_and_bounds() {
        let spec = GridGraspSpec::open(8, 8);
        let env = make_grid(&spec).unwrap();
        let f = grid_features(&spec);
        let mut out = [0.0; 4];
        f.write_features(&handle(&env, &spec, 0, 0), &mut out);
        assert_eq!(out, [0.0, 0.0, 0.875, 0.875]);
        f.write_features(&handle(&env, &spec, 7, 7), &mut out);
        assert_eq!(&out[2..], &[0.0, 0.0]);
        for i in 0..spec.n_cells() {
            f.write_features(&env.state(i).unwrap(), &mut out);
            assert!(out.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn rules_flag_only_obstacles() {
        let spec = GridGraspSpec::obstacle_course();
        let env = make_grid(&spec).unwrap();
        let rules = grid_rule_validator(&spec);
        for i in 0..spec.n_cells() {
            let c = spec.cell_of(i);
            let s = env.state(i).unwrap();
            assert_eq!(rules.is_valid(&s), !spec.obstacles.contains(&c));
        }
        assert!(rules.is_valid(&env.initial_state()));
    }
}
