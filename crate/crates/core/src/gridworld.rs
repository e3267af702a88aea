//! Deterministic lake gridworld.
//!
//! States are row-major cell indices. Moving off the grid leaves the agent in
//! place. Holes penalize on arrival but do not end the episode; only the goal
//! is terminal.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_MAX_STEPS: usize = 100;
pub const DEFAULT_BUDGET_FLOOR: f64 = -100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State(pub usize);

impl State {
    pub fn index(self) -> usize {
        self.0
    }

    /// Letter label (`A`, `B`, ...) for the first 26 cells, `s<i>` beyond.
    pub fn label(self) -> String {
        if self.0 < 26 {
            char::from(b'A' + self.0 as u8).to_string()
        } else {
            format!("s{}", self.0)
        }
    }

    pub fn from_label(label: &str) -> Option<State> {
        let bytes = label.as_bytes();
        match bytes {
            [c] if c.is_ascii_uppercase() => Some(State(usize::from(c - b'A'))),
            [b's', rest @ ..] => std::str::from_utf8(rest).ok()?.parse().ok().map(State),
            _ => None,
        }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl Action {
    /// All actions in encoding order; argmax ties resolve to the earliest.
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Action> {
        Action::ALL.get(code).copied()
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
        }
    }

    pub fn arrow(self) -> char {
        match self {
            Action::Up => '↑',
            Action::Down => '↓',
            Action::Left => '←',
            Action::Right => '→',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSpec {
    width: usize,
    height: usize,
    start: State,
    goal: State,
    holes: BTreeSet<State>,
}

impl GridSpec {
    pub fn new(
        width: usize,
        height: usize,
        start: State,
        goal: State,
        holes: impl IntoIterator<Item = State>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidGrid("width and height must be positive".into()));
        }
        let n = width * height;
        let holes: BTreeSet<State> = holes.into_iter().collect();
        for s in holes.iter().chain([&start, &goal]) {
            if s.0 >= n {
                return Err(Error::InvalidGrid(format!("state {} outside a {n}-cell grid", s.0)));
            }
        }
        if start == goal {
            return Err(Error::InvalidGrid("start and goal coincide".into()));
        }
        if holes.contains(&goal) || holes.contains(&start) {
            return Err(Error::InvalidGrid("start and goal must not be holes".into()));
        }
        Ok(GridSpec {
            width,
            height,
            start,
            goal,
            holes,
        })
    }

    /// The 4×4 lake: start A, goal P, holes F, H, L, M.
    pub fn frozen_lake() -> Self {
        GridSpec::new(4, 4, State(0), State(15), [5, 7, 11, 12].map(State))
            .expect("built-in layout is valid")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn start(&self) -> State {
        self.start
    }

    pub fn goal(&self) -> State {
        self.goal
    }

    pub fn holes(&self) -> &BTreeSet<State> {
        &self.holes
    }

    pub fn n_states(&self) -> usize {
        self.width * self.height
    }

    pub fn states(&self) -> impl Iterator<Item = State> + '_ {
        (0..self.n_states()).map(State)
    }

    pub fn non_terminal_states(&self) -> impl Iterator<Item = State> + '_ {
        self.states().filter(move |&s| s != self.goal)
    }

    pub fn is_hole(&self, s: State) -> bool {
        self.holes.contains(&s)
    }

    pub fn is_goal(&self, s: State) -> bool {
        s == self.goal
    }

    pub fn row_col(&self, s: State) -> (usize, usize) {
        (s.0 / self.width, s.0 % self.width)
    }

    pub fn from_row_col(&self, row: usize, col: usize) -> Option<State> {
        (row < self.height && col < self.width).then_some(State(row * self.width + col))
    }

    /// Adjacent cell in direction `a`, or `s` itself at the boundary.
    pub fn successor(&self, s: State, a: Action) -> State {
        let (row, col) = self.row_col(s);
        let (dr, dc) = a.delta();
        let r = row as isize + dr;
        let c = col as isize + dc;
        if r < 0 || c < 0 {
            return s;
        }
        self.from_row_col(r as usize, c as usize).unwrap_or(s)
    }

    /// Parses a map: one row per line, `S` start, `G` goal, `H` hole, `.` free.
    /// Blank lines and lines starting with `#` are ignored.
    pub fn parse_map(text: &str) -> Result<Self> {
        let mut rows: Vec<(usize, &str)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            rows.push((i + 1, line));
        }
        let Some(&(_, first)) = rows.first() else {
            return Err(Error::Parse {
                line: 1,
                msg: "empty map".into(),
            });
        };
        let width = first.chars().count();
        let mut start = None;
        let mut goal = None;
        let mut holes = Vec::new();
        for (r, &(line_no, row)) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("row has {} cells, expected {width}", row.chars().count()),
                });
            }
            for (c, ch) in row.chars().enumerate() {
                let s = State(r * width + c);
                let slot = match ch {
                    'S' => &mut start,
                    'G' => &mut goal,
                    'H' => {
                        holes.push(s);
                        continue;
                    }
                    '.' => continue,
                    other => {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: format!("unexpected cell '{other}'"),
                        })
                    }
                };
                if slot.replace(s).is_some() {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("duplicate '{ch}'"),
                    });
                }
            }
        }
        let missing = |what: &str| Error::Parse {
            line: rows.last().map_or(1, |r| r.0),
            msg: format!("map has no {what}"),
        };
        let start = start.ok_or_else(|| missing("start"))?;
        let goal = goal.ok_or_else(|| missing("goal"))?;
        GridSpec::new(width, rows.len(), start, goal, holes)
    }

    pub fn load_map(path: impl AsRef<Path>) -> Result<Self> {
        GridSpec::parse_map(&std::fs::read_to_string(path)?)
    }

    pub fn to_map_string(&self) -> String {
        let mut out = String::with_capacity(self.n_states() + self.height);
        for s in self.states() {
            out.push(if s == self.start {
                'S'
            } else if s == self.goal {
                'G'
            } else if self.is_hole(s) {
                'H'
            } else {
                '.'
            });
            if (s.0 + 1) % self.width == 0 {
                out.push('\n');
            }
        }
        out
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::frozen_lake()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardVariant {
    /// Reward is attributed to the cell being entered; no step cost.
    DpArrival,
    /// Arrival reward plus a per-step cost; used for episode returns.
    EpisodeEval,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardModel {
    pub variant: RewardVariant,
    pub goal_reward: f64,
    pub hole_penalty: f64,
    pub step_penalty: f64,
}

impl RewardModel {
    pub fn dp_arrival() -> Self {
        RewardModel {
            variant: RewardVariant::DpArrival,
            goal_reward: 10.0,
            hole_penalty: -10.0,
            step_penalty: 0.0,
        }
    }

    pub fn episode_eval() -> Self {
        RewardModel {
            variant: RewardVariant::EpisodeEval,
            goal_reward: 10.0,
            hole_penalty: -10.0,
            step_penalty: -1.0,
        }
    }

    /// Bonus for entering `s`, excluding any step cost.
    pub fn arrival_reward(&self, spec: &GridSpec, s: State) -> f64 {
        if spec.is_goal(s) {
            self.goal_reward
        } else if spec.is_hole(s) {
            self.hole_penalty
        } else {
            0.0
        }
    }

    /// Full reward of a transition that lands in `next`.
    pub fn transition_reward(&self, spec: &GridSpec, next: State) -> f64 {
        let step = match self.variant {
            RewardVariant::DpArrival => 0.0,
            RewardVariant::EpisodeEval => self.step_penalty,
        };
        step + self.arrival_reward(spec, next)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionOutcome {
    pub next: State,
    pub reward: f64,
    pub terminal: bool,
}

pub fn step(spec: &GridSpec, model: &RewardModel, s: State, a: Action) -> Result<TransitionOutcome> {
    if s.0 >= spec.n_states() {
        return Err(Error::InvalidGrid(format!("state {} outside the grid", s.0)));
    }
    if spec.is_goal(s) {
        return Err(Error::TerminalStep(s));
    }
    let next = spec.successor(s, a);
    Ok(TransitionOutcome {
        next,
        reward: model.transition_reward(spec, next),
        terminal: spec.is_goal(next),
    })
}

pub fn encode_one_hot(spec: &GridSpec, s: State) -> Vec<f64> {
    let mut v = vec![0.0; spec.n_states()];
    v[s.0] = 1.0;
    v
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeResult {
    pub total_reward: f64,
    pub steps: usize,
    pub reached_goal: bool,
}

/// Rolls out `policy` from the start state until the goal, `max_steps`, or the
/// cumulative reward drops to `budget_floor` (the returned total is clamped there).
pub fn run_episode(
    spec: &GridSpec,
    model: &RewardModel,
    mut policy: impl FnMut(State) -> Action,
    max_steps: usize,
    budget_floor: f64,
) -> EpisodeResult {
    assert!(max_steps >= 1, "max_steps must be at least 1");
    let mut s = spec.start();
    let mut total = 0.0;
    let mut steps = 0;
    while steps < max_steps {
        let outcome = step(spec, model, s, policy(s)).expect("rollouts never step from the goal");
        total += outcome.reward;
        steps += 1;
        s = outcome.next;
        if outcome.terminal || total <= budget_floor {
            break;
        }
    }
    EpisodeResult {
        total_reward: total.max(budget_floor),
        steps,
        reached_goal: spec.is_goal(s),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(label: &str) -> State {
        State::from_label(label).unwrap()
    }

    #[test]
    fn step_examples() {
        let spec = GridSpec::frozen_lake();
        let eval = RewardModel::episode_eval();
        let dp = RewardModel::dp_arrival();

        let o = step(&spec, &eval, st("A"), Action::Right).unwrap();
        assert_eq!((o.next, o.reward, o.terminal), (st("B"), -1.0, false));

        let o = step(&spec, &eval, st("O"), Action::Down).unwrap();
        assert_eq!((o.next, o.reward, o.terminal), (st("O"), -1.0, false));

        let o = step(&spec, &dp, st("O"), Action::Right).unwrap();
        assert_eq!((o.next, o.reward, o.terminal), (st("P"), 10.0, true));

        let o = step(&spec, &eval, st("B"), Action::Down).unwrap();
        assert_eq!((o.next, o.reward, o.terminal), (st("F"), -11.0, false));
    }

    #[test]
    fn stepping_from_goal_is_an_error() {
        let spec = GridSpec::frozen_lake();
        let err = step(&spec, &RewardModel::dp_arrival(), spec.goal(), Action::Left);
        assert!(matches!(err, Err(Error::TerminalStep(_))));
    }

    #[test]
    fn one_hot_encoding() {
        let spec = GridSpec::frozen_lake();
        let a = encode_one_hot(&spec, st("A"));
        assert_eq!(a.len(), 16);
        assert_eq!(a[0], 1.0);
        let p = encode_one_hot(&spec, st("P"));
        assert_eq!(p[15], 1.0);
        for s in spec.states() {
            assert_eq!(encode_one_hot(&spec, s).iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn optimal_route_scores_four() {
        let spec = GridSpec::frozen_lake();
        // A ↓ E ↓ I → J ↓ N → O → P
        let route = |s: State| match s.label().as_str() {
            "A" | "E" | "J" => Action::Down,
            _ => Action::Right,
        };
        let r = run_episode(
            &spec,
            &RewardModel::episode_eval(),
            route,
            DEFAULT_MAX_STEPS,
            DEFAULT_BUDGET_FLOOR,
        );
        assert_eq!(r.total_reward, 4.0);
        assert_eq!(r.steps, 6);
        assert!(r.reached_goal);
    }

    #[test]
    fn stuck_policy_hits_budget_floor() {
        let spec = GridSpec::frozen_lake();
        let r = run_episode(
            &spec,
            &RewardModel::episode_eval(),
            |_| Action::Up,
            DEFAULT_MAX_STEPS,
            DEFAULT_BUDGET_FLOOR,
        );
        assert_eq!(r.total_reward, -100.0);
        assert!(!r.reached_goal);
    }

    #[test]
    fn step_cap() {
        let spec = GridSpec::frozen_lake();
        let r = run_episode(&spec, &RewardModel::episode_eval(), |_| Action::Right, 1, -100.0);
        assert_eq!(r.steps, 1);
    }

    #[test]
    fn map_round_trip_matches_builtin() {
        let text = "S...\n.H.H\n...H\nH..G\n";
        let spec = GridSpec::parse_map(text).unwrap();
        assert_eq!(spec, GridSpec::frozen_lake());
        assert_eq!(spec.to_map_string(), text);
    }

    #[test]
    fn map_errors() {
        assert!(GridSpec::parse_map("S..\n..\n").is_err());
        assert!(GridSpec::parse_map("S.X\n..G\n").is_err());
        assert!(GridSpec::parse_map("S..\n...\n").is_err());
        assert!(GridSpec::parse_map("SS.\n..G\n").is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(GridSpec::new(4, 4, State(0), State(0), []).is_err());
        assert!(GridSpec::new(4, 4, State(0), State(16), []).is_err());
        assert!(GridSpec::new(4, 4, State(0), State(15), [State(15)]).is_err());
    }

    #[test]
    fn labels_round_trip() {
        for i in [0, 15, 25, 26, 99] {
            assert_eq!(State::from_label(&State(i).label()), Some(State(i)));
        }
    }
}
