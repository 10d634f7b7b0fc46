//! Mountain/valley predator-prey grid world.
//!
//! Rows grow upwards: row 0 is the valley floor, row `height - 1` the
//! mountain top. Agents and the valley prey fail to execute `Up` with
//! probability `slip_prob`, the mountain prey fails to execute `Down` with
//! the same probability. An episode ends when a prey is surrounded on all
//! four sides by agents or the grid boundary, or after `episode_limit` steps.

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::config::EnvConfig;
use crate::error::{Error, Result};

pub const N_ACTIONS: usize = 5;

/// Number of observation planes: other agents, valley prey, mountain prey,
/// out-of-bounds cells.
pub const N_PLANES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Stay,
}

impl Action {
    pub const ALL: [Action; N_ACTIONS] = [
        Action::Up,
        Action::Down,
        Action::Left,
        Action::Right,
        Action::Stay,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        Self::ALL[i]
    }

    pub fn one_hot(self) -> [f32; N_ACTIONS] {
        let mut v = [0.0; N_ACTIONS];
        v[self.index()] = 1.0;
        v
    }

    /// (row, col) displacement.
    pub fn delta(self) -> (i64, i64) {
        match self {
            Action::Up => (1, 0),
            Action::Down => (-1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
            Action::Stay => (0, 0),
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Action {
        Action::from_index(rng.gen_range(0..N_ACTIONS))
    }
}

/// One action per agent, indexed by agent id.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JointAction(pub Vec<Action>);

impl JointAction {
    pub fn uniform(n: usize, action: Action) -> Self {
        JointAction(vec![action; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Index<usize> for JointAction {
    type Output = Action;
    fn index(&self, i: usize) -> &Action {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for JointAction {
    fn index_mut(&mut self, i: usize) -> &mut Action {
        &mut self.0[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Pos {
    pub row: usize,
    pub col: usize,
}

impl Pos {
    pub fn new(row: usize, col: usize) -> Self {
        Pos { row, col }
    }

    /// Cell reached by `action`, or `None` if it leaves the grid.
    pub fn moved(self, action: Action, height: usize, width: usize) -> Option<Pos> {
        let (dr, dc) = action.delta();
        let row = self.row as i64 + dr;
        let col = self.col as i64 + dc;
        if row < 0 || col < 0 || row >= height as i64 || col >= width as i64 {
            None
        } else {
            Some(Pos::new(row as usize, col as usize))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PreyKind {
    Valley,
    Mountain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mover {
    Agent,
    Prey(PreyKind),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Prey {
    pub pos: Pos,
    pub kind: PreyKind,
    pub alive: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridState {
    pub agents: Vec<Pos>,
    /// Valley prey first, then the mountain prey if present.
    pub prey: Vec<Prey>,
    pub step_count: usize,
}

impl GridState {
    fn agent_at(&self, p: Pos) -> bool {
        self.agents.contains(&p)
    }

    fn occupied(&self, p: Pos) -> bool {
        self.agent_at(p) || self.prey.iter().any(|q| q.alive && q.pos == p)
    }

    pub fn captured(&self) -> bool {
        self.prey.iter().any(|p| !p.alive)
    }
}

/// Agent-centric window, `N_PLANES` planes of `(2r+1)^2` binary cells,
/// plane-major then row-major with the window row growing with grid row.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub radius: usize,
    pub data: Vec<f32>,
}

impl Observation {
    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn len_for(radius: usize) -> usize {
        N_PLANES * (2 * radius + 1) * (2 * radius + 1)
    }

    pub fn get(&self, plane: usize, row: usize, col: usize) -> f32 {
        let s = self.side();
        self.data[plane * s * s + row * s + col]
    }

    pub fn plane(&self, plane: usize) -> &[f32] {
        let s2 = self.side() * self.side();
        &self.data[plane * s2..(plane + 1) * s2]
    }
}

/// Normalised global state: per agent (row, col), per prey (row, col, alive),
/// then the elapsed fraction of the episode.
#[derive(Debug, Clone, PartialEq)]
pub struct StateFeatures(pub Vec<f32>);

impl StateFeatures {
    pub fn len_for(n_agents: usize, n_prey: usize) -> usize {
        2 * n_agents + 3 * n_prey + 1
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub observations: Vec<Observation>,
}

#[derive(Debug, Clone)]
pub struct GridWorld {
    config: EnvConfig,
}

impl GridWorld {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn n_agents(&self) -> usize {
        self.config.n_agents
    }

    pub fn obs_len(&self) -> usize {
        Observation::len_for(self.config.obs_radius)
    }

    pub fn state_len(&self) -> usize {
        StateFeatures::len_for(self.config.n_agents, self.config.n_prey())
    }

    pub fn agent_row(&self) -> usize {
        self.config.height / 2
    }

    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> (GridState, Vec<Observation>) {
        let c = &self.config;
        let valley_col = match c.valley_spawn_col {
            Some(col) => col,
            None => rng.gen_range(0..c.width),
        };
        let mut prey = vec![Prey {
            pos: Pos::new(0, valley_col),
            kind: PreyKind::Valley,
            alive: true,
        }];
        if c.mountain_prey {
            prey.push(Prey {
                pos: Pos::new(c.height - 1, rng.gen_range(0..c.width)),
                kind: PreyKind::Mountain,
                alive: true,
            });
        }

        let row = self.agent_row();
        let free: Vec<usize> = (0..c.width)
            .filter(|&col| !prey.iter().any(|p| p.pos == Pos::new(row, col)))
            .collect();
        let agents = index::sample(rng, free.len(), c.n_agents)
            .into_iter()
            .map(|i| Pos::new(row, free[i]))
            .collect();

        let state = GridState {
            agents,
            prey,
            step_count: 0,
        };
        let obs = self.observe_all(&state);
        (state, obs)
    }

    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &mut GridState,
        actions: &JointAction,
        rng: &mut R,
    ) -> Result<StepOutcome> {
        let c = &self.config;
        if state.captured() || state.step_count >= c.episode_limit {
            return Err(Error::Usage("step called on a finished episode".into()));
        }
        if actions.len() != c.n_agents {
            return Err(Error::Usage(format!(
                "joint action has {} entries, expected {}",
                actions.len(),
                c.n_agents
            )));
        }

        let mut order: Vec<usize> = (0..c.n_agents).collect();
        order.shuffle(rng);
        for a in order {
            let action = self.apply_slip(Mover::Agent, actions[a], rng);
            self.try_move_agent(state, a, action);
        }

        if c.prey_moves {
            for i in 0..state.prey.len() {
                if !state.prey[i].alive {
                    continue;
                }
                let intended = Action::random(rng);
                let action = self.apply_slip(Mover::Prey(state.prey[i].kind), intended, rng);
                if let Some(dest) = state.prey[i].pos.moved(action, c.height, c.width) {
                    if !state.occupied(dest) {
                        state.prey[i].pos = dest;
                    }
                }
            }
        }

        let mut reward = 0.0;
        let mut terminated = false;
        let captures: Vec<bool> = (0..state.prey.len())
            .map(|i| self.capture_check(state, i))
            .collect();
        for (i, caught) in captures.into_iter().enumerate() {
            if caught {
                terminated = true;
                state.prey[i].alive = false;
                let r = match state.prey[i].kind {
                    PreyKind::Valley => c.valley_reward,
                    PreyKind::Mountain => c.mountain_reward,
                };
                // the larger reward wins a simultaneous double capture
                if r > reward {
                    reward = r;
                }
            }
        }

        state.step_count += 1;
        let truncated = !terminated && state.step_count == c.episode_limit;
        Ok(StepOutcome {
            reward,
            terminated,
            truncated,
            observations: self.observe_all(state),
        })
    }

    /// Agents and the valley prey fail `Up`, the mountain prey fails `Down`,
    /// each with probability `slip_prob`; a failed move becomes `Stay`.
    pub fn apply_slip<R: Rng + ?Sized>(&self, mover: Mover, action: Action, rng: &mut R) -> Action {
        let fragile = match mover {
            Mover::Agent | Mover::Prey(PreyKind::Valley) => Action::Up,
            Mover::Prey(PreyKind::Mountain) => Action::Down,
        };
        if action == fragile && rng.gen_bool(self.config.slip_prob) {
            Action::Stay
        } else {
            action
        }
    }

    fn try_move_agent(&self, state: &mut GridState, agent: usize, action: Action) {
        let c = &self.config;
        if let Some(dest) = state.agents[agent].moved(action, c.height, c.width) {
            if !state.occupied(dest) {
                state.agents[agent] = dest;
            }
        }
    }

    /// True iff every orthogonal neighbour of a living prey is outside the
    /// grid or holds an agent.
    pub fn capture_check(&self, state: &GridState, prey_index: usize) -> bool {
        let c = &self.config;
        let prey = &state.prey[prey_index];
        if !prey.alive {
            return false;
        }
        [Action::Up, Action::Down, Action::Left, Action::Right]
            .into_iter()
            .all(|dir| match prey.pos.moved(dir, c.height, c.width) {
                None => true,
                Some(p) => state.agent_at(p),
            })
    }

    pub fn observe(&self, state: &GridState, agent_id: usize) -> Observation {
        let c = &self.config;
        let r = c.obs_radius as i64;
        let side = 2 * c.obs_radius + 1;
        let mut data = vec![0.0f32; N_PLANES * side * side];
        let me = state.agents[agent_id];
        let cell = |plane: usize, dr: i64, dc: i64| -> Option<usize> {
            if dr.abs() > r || dc.abs() > r {
                return None;
            }
            let wr = (dr + r) as usize;
            let wc = (dc + r) as usize;
            Some(plane * side * side + wr * side + wc)
        };
        let rel = |p: Pos| (p.row as i64 - me.row as i64, p.col as i64 - me.col as i64);

        for (i, &other) in state.agents.iter().enumerate() {
            if i == agent_id {
                continue;
            }
            let (dr, dc) = rel(other);
            if let Some(k) = cell(0, dr, dc) {
                data[k] = 1.0;
            }
        }
        for prey in state.prey.iter().filter(|p| p.alive) {
            let plane = match prey.kind {
                PreyKind::Valley => 1,
                PreyKind::Mountain => 2,
            };
            let (dr, dc) = rel(prey.pos);
            if let Some(k) = cell(plane, dr, dc) {
                data[k] = 1.0;
            }
        }
        for dr in -r..=r {
            for dc in -r..=r {
                let row = me.row as i64 + dr;
                let col = me.col as i64 + dc;
                if row < 0 || col < 0 || row >= c.height as i64 || col >= c.width as i64 {
                    data[cell(3, dr, dc).unwrap()] = 1.0;
                }
            }
        }
        Observation {
            radius: c.obs_radius,
            data,
        }
    }

    pub fn observe_all(&self, state: &GridState) -> Vec<Observation> {
        (0..state.agents.len()).map(|a| self.observe(state, a)).collect()
    }

    pub fn global_features(&self, state: &GridState) -> StateFeatures {
        let c = &self.config;
        let rs = (c.height.max(2) - 1) as f32;
        let cs = (c.width.max(2) - 1) as f32;
        let mut v = Vec::with_capacity(self.state_len());
        for a in &state.agents {
            v.push(a.row as f32 / rs);
            v.push(a.col as f32 / cs);
        }
        for p in &state.prey {
            v.push(p.pos.row as f32 / rs);
            v.push(p.pos.col as f32 / cs);
            v.push(if p.alive { 1.0 } else { 0.0 });
        }
        v.push(state.step_count as f32 / c.episode_limit as f32);
        StateFeatures(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn world(height: usize, width: usize, n: usize) -> GridWorld {
        GridWorld::new(EnvConfig {
            height,
            width,
            n_agents: n,
            ..EnvConfig::default()
        })
        .unwrap()
    }

    fn state(agents: &[(usize, usize)], valley: (usize, usize), mountain: (usize, usize)) -> GridState {
        GridState {
            agents: agents.iter().map(|&(r, c)| Pos::new(r, c)).collect(),
            prey: vec![
                Prey {
                    pos: Pos::new(valley.0, valley.1),
                    kind: PreyKind::Valley,
                    alive: true,
                },
                Prey {
                    pos: Pos::new(mountain.0, mountain.1),
                    kind: PreyKind::Mountain,
                    alive: true,
                },
            ],
            step_count: 0,
        }
    }

    #[test]
    fn reset_places_entities_on_their_rows() {
        let w = world(41, 10, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let (s, obs) = w.reset(&mut rng);
            assert!(s.agents.iter().all(|p| p.row == 20));
            assert_eq!(s.prey[0].pos.row, 0);
            assert_eq!(s.prey[1].pos.row, 40);
            let mut cols: Vec<_> = s.agents.iter().map(|p| p.col).collect();
            cols.sort();
            cols.dedup();
            assert_eq!(cols.len(), 4);
            assert_eq!(obs.len(), 4);
            assert_eq!(s.step_count, 0);
        }
    }

    #[test]
    fn narrow_grid_forces_agent_placement() {
        let w = world(3, 4, 4);
        let (s, _) = w.reset(&mut ChaCha8Rng::seed_from_u64(3));
        let mut cols: Vec<_> = s.agents.iter().map(|p| (p.row, p.col)).collect();
        cols.sort();
        assert_eq!(cols, vec![(1, 0), (1, 1), (1, 2), (1, 3)]);
    }

    #[test]
    fn too_narrow_grid_is_a_configuration_error() {
        let r = GridWorld::new(EnvConfig {
            width: 3,
            n_agents: 4,
            ..EnvConfig::default()
        });
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn corner_capture_needs_two_agents() {
        let w = world(5, 5, 2);
        let s = state(&[(0, 1), (1, 0)], (0, 0), (4, 4));
        assert!(w.capture_check(&s, 0));
        assert!(!w.capture_check(&s, 1));
    }

    #[test]
    fn three_sides_do_not_capture() {
        let w = world(7, 7, 3);
        let s = state(&[(4, 3), (2, 3), (3, 2)], (3, 3), (6, 6));
        assert!(!w.capture_check(&s, 0));
    }

    #[test]
    fn all_stay_without_capture_gives_nothing() {
        let w = world(7, 7, 2);
        let mut s = state(&[(3, 1), (3, 5)], (0, 3), (6, 3));
        let mut cfg = w.config().clone();
        cfg.prey_moves = false;
        let w = GridWorld::new(cfg).unwrap();
        let out = w
            .step(&mut s, &JointAction::uniform(2, Action::Stay), &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        assert_eq!(out.reward, 0.0);
        assert!(!out.terminated && !out.truncated);
        assert_eq!(s.agents, vec![Pos::new(3, 1), Pos::new(3, 5)]);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn mountain_capture_pays_ten_and_dominates() {
        let mut cfg = EnvConfig {
            height: 5,
            width: 5,
            n_agents: 4,
            prey_moves: false,
            ..EnvConfig::default()
        };
        let w = GridWorld::new(cfg.clone()).unwrap();
        // mountain prey in the top-left corner, valley prey bottom-right
        let mut s = state(&[(3, 0), (4, 2), (1, 4), (0, 2)], (0, 4), (4, 0));
        let joint = JointAction(vec![Action::Stay, Action::Left, Action::Stay, Action::Stay]);
        let out = w.step(&mut s, &joint, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out.reward, 10.0);
        assert!(out.terminated);
        assert!(!s.prey[1].alive);

        // both prey captured at once
        cfg.n_agents = 4;
        let w = GridWorld::new(cfg).unwrap();
        let mut s = state(&[(3, 0), (4, 2), (1, 4), (0, 2)], (0, 4), (4, 0));
        let joint = JointAction(vec![Action::Stay, Action::Left, Action::Stay, Action::Right]);
        let out = w.step(&mut s, &joint, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(!s.prey[0].alive && !s.prey[1].alive);
        assert_eq!(out.reward, 10.0);
    }

    #[test]
    fn stepping_a_finished_episode_is_a_usage_error() {
        let w = world(5, 5, 2);
        let mut s = state(&[(0, 1), (1, 0)], (0, 0), (4, 4));
        s.prey[0].alive = false;
        let r = w.step(&mut s, &JointAction::uniform(2, Action::Stay), &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(r, Err(Error::Usage(_))));

        let mut s = state(&[(2, 1), (2, 3)], (0, 0), (4, 4));
        s.step_count = w.config().episode_limit;
        let r = w.step(&mut s, &JointAction::uniform(2, Action::Stay), &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(r, Err(Error::Usage(_))));
    }

    #[test]
    fn truncation_at_the_limit() {
        let mut cfg = EnvConfig {
            height: 9,
            width: 9,
            n_agents: 1,
            episode_limit: 3,
            ..EnvConfig::default()
        };
        cfg.prey_moves = false;
        let w = GridWorld::new(cfg).unwrap();
        let mut s = state(&[(4, 4)], (0, 0), (8, 8));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let stay = JointAction::uniform(1, Action::Stay);
        assert!(!w.step(&mut s, &stay, &mut rng).unwrap().truncated);
        assert!(!w.step(&mut s, &stay, &mut rng).unwrap().truncated);
        let out = w.step(&mut s, &stay, &mut rng).unwrap();
        assert!(out.truncated && !out.terminated);
    }

    #[test]
    fn observation_of_lonely_agent_is_empty() {
        let w = world(41, 10, 1);
        let s = state(&[(20, 5)], (0, 0), (40, 9));
        let o = w.observe(&s, 0);
        assert_eq!(o.data.len(), 100);
        assert!(o.data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn corner_observation_marks_sixteen_outside_cells() {
        let w = world(41, 10, 1);
        let s = state(&[(0, 0)], (20, 5), (40, 9));
        let o = w.observe(&s, 0);
        let oob = o.plane(3);
        assert_eq!(oob.iter().filter(|&&x| x == 1.0).count(), 16);
        for wr in 0..5 {
            for wc in 0..5 {
                let outside = wr < 2 || wc < 2;
                assert_eq!(o.get(3, wr, wc) == 1.0, outside, "cell ({wr},{wc})");
            }
        }
    }

    #[test]
    fn prey_offset_translates_to_window_cell() {
        let w = world(41, 10, 1);
        let s = state(&[(20, 5)], (21, 5), (40, 9));
        let o = w.observe(&s, 0);
        assert_eq!(o.get(1, 3, 2), 1.0);
        assert_eq!(o.plane(1).iter().sum::<f32>(), 1.0);
        let s = state(&[(20, 5)], (0, 0), (19, 4));
        assert_eq!(w.observe(&s, 0).get(2, 1, 1), 1.0);
    }

    #[test]
    fn observation_excludes_self_and_shows_others() {
        let w = world(41, 10, 2);
        let s = state(&[(20, 5), (20, 7)], (0, 0), (40, 9));
        let o = w.observe(&s, 0);
        assert_eq!(o.get(0, 2, 2), 0.0);
        assert_eq!(o.get(0, 2, 4), 1.0);
    }

    #[test]
    fn global_features_normalise_endpoints() {
        let w = world(41, 10, 2);
        let mut s = state(&[(0, 0), (40, 9)], (0, 3), (40, 3));
        s.step_count = 50;
        let f = w.global_features(&s).0;
        assert_eq!(f.len(), 2 * 2 + 6 + 1);
        assert_eq!(&f[0..4], &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(*f.last().unwrap(), 0.5);
        assert!(f.iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert_eq!(world(41, 10, 4).state_len(), 15);
    }

    #[test]
    fn action_one_hot_is_a_bijection() {
        for (i, a) in Action::ALL.iter().enumerate() {
            let v = a.one_hot();
            assert_eq!(v.iter().position(|&x| x == 1.0), Some(i));
            assert_eq!(Action::from_index(i), *a);
        }
    }

    #[test]
    fn single_row_corridor_keeps_agent_off_the_prey() {
        let cfg = EnvConfig {
            height: 1,
            width: 5,
            n_agents: 1,
            mountain_prey: false,
            prey_moves: false,
            valley_spawn_col: Some(0),
            episode_limit: 20,
            ..EnvConfig::default()
        };
        let w = GridWorld::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let (s, _) = w.reset(&mut rng);
            assert_eq!(s.prey.len(), 1);
            assert_ne!(s.agents[0], s.prey[0].pos);
        }
        assert_eq!(w.state_len(), 2 + 3 + 1);
    }
}
