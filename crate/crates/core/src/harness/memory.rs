use rand::Rng;

use crate::cartpole::{Action, CartState, TerminalReason};
use crate::model::{FutureWindow, Representation, WindowStep};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub action: Action,
    /// State after applying `action`.
    pub state: CartState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub initial: CartState,
    pub transitions: Vec<Transition>,
    pub terminal: TerminalReason,
}

impl EpisodeRecord {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// State `i` of the episode; state 0 is the initial state.
    pub fn state(&self, i: usize) -> CartState {
        if i == 0 {
            self.initial
        } else {
            self.transitions[i - 1].state
        }
    }

    /// Perfect iff the episode ran to the cap without failing.
    pub fn is_perfect(&self, max_steps: usize) -> bool {
        self.terminal == TerminalReason::Cap && self.len() == max_steps
    }

    /// Conditioning state and raw window starting at state `start`.
    ///
    /// Entry `k` holds the action taken at state `start + k` and the state it
    /// led to. Past the end of the episode the terminal state is frozen and
    /// the last action repeated.
    pub fn window(&self, start: usize, n_future: usize) -> (CartState, FutureWindow) {
        let last = self.transitions.last().copied();
        let steps = (0..n_future)
            .map(|k| {
                let tr = self.transitions.get(start + k).copied().or(last).expect("nonempty episode");
                WindowStep {
                    action: tr.action.encode(),
                    state: tr.state.to_array(),
                }
            })
            .collect();
        (
            self.state(start),
            FutureWindow {
                steps,
                representation: Representation::Raw,
            },
        )
    }
}

/// How episodes shorter than a window are treated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Freeze the terminal state and repeat the last action.
    FreezeTerminal,
    /// Never sample from them.
    SkipShort,
}

impl Padding {
    pub fn as_str(self) -> &'static str {
        match self {
            Padding::FreezeTerminal => "freeze",
            Padding::SkipShort => "skip",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "freeze" => Some(Padding::FreezeTerminal),
            "skip" => Some(Padding::SkipShort),
            _ => None,
        }
    }
}

/// Number of window starts an episode offers: every start whose window fits,
/// or a single padded start when the episode is shorter than a window.
pub fn valid_starts(len: usize, n_future: usize, padding: Padding) -> usize {
    if len >= n_future {
        len - n_future + 1
    } else {
        match padding {
            Padding::FreezeTerminal if len > 0 => 1,
            _ => 0,
        }
    }
}

/// Append-only store of every episode seen so far.
#[derive(Clone, Debug, Default)]
pub struct ReplayMemory {
    episodes: Vec<EpisodeRecord>,
}

impl ReplayMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, episode: EpisodeRecord) {
        self.episodes.push(episode);
    }

    pub fn episodes(&self) -> &[EpisodeRecord] {
        &self.episodes
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }
}

/// A drawn training sample with its provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub episode: usize,
    pub start: usize,
    pub current: CartState,
    pub window: FutureWindow,
}

/// Draws `batch_size` windows: the episode uniformly first, then the start
/// uniformly within it, so long episodes are not favored.
pub fn sample_batch<R: Rng + ?Sized>(
    memory: &ReplayMemory,
    batch_size: usize,
    n_future: usize,
    padding: Padding,
    rng: &mut R,
) -> Vec<Sample> {
    let eligible: Vec<usize> = memory
        .episodes()
        .iter()
        .enumerate()
        .filter(|(_, e)| valid_starts(e.len(), n_future, padding) > 0)
        .map(|(i, _)| i)
        .collect();
    if eligible.is_empty() {
        return Vec::new();
    }
    (0..batch_size)
        .map(|_| {
            let episode = eligible[rng.random_range(0..eligible.len())];
            let ep = &memory.episodes()[episode];
            let start = rng.random_range(0..valid_starts(ep.len(), n_future, padding));
            let (current, window) = ep.window(start, n_future);
            Sample {
                episode,
                start,
                current,
                window,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn episode(len: usize) -> EpisodeRecord {
        EpisodeRecord {
            initial: CartState::new(0.0, 0.0, 0.0, 0.0),
            transitions: (1..=len)
                .map(|i| Transition {
                    action: if i % 2 == 0 { Action::Left } else { Action::Right },
                    state: CartState::new(i as f64, 0.0, 0.0, 0.0),
                })
                .collect(),
            terminal: TerminalReason::Angle,
        }
    }

    #[test]
    fn starts_for_twenty_transitions() {
        assert_eq!(valid_starts(20, 16, Padding::FreezeTerminal), 5);
        assert_eq!(valid_starts(16, 16, Padding::SkipShort), 1);
        assert_eq!(valid_starts(7, 16, Padding::FreezeTerminal), 1);
        assert_eq!(valid_starts(7, 16, Padding::SkipShort), 0);
    }

    #[test]
    fn window_alignment() {
        let ep = episode(20);
        let (current, w) = ep.window(3, 4);
        assert_eq!(current.x, 3.0);
        let xs: Vec<f64> = w.steps.iter().map(|s| s.state[0]).collect();
        assert_eq!(xs, vec![4.0, 5.0, 6.0, 7.0]);
        // action at state 3 is transition 4's action (right for odd index)
        assert_eq!(w.steps[0].action, -1.0);
        assert_eq!(w.steps[1].action, 1.0);
    }

    #[test]
    fn short_episode_is_padded_with_frozen_terminal() {
        let ep = episode(3);
        let (_, w) = ep.window(0, 6);
        let xs: Vec<f64> = w.steps.iter().map(|s| s.state[0]).collect();
        assert_eq!(xs, vec![1.0, 2.0, 3.0, 3.0, 3.0, 3.0]);
        let acts: Vec<f64> = w.steps.iter().map(|s| s.action).collect();
        assert_eq!(acts, vec![1.0, -1.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn episode_uniform_not_step_uniform() {
        let mut memory = ReplayMemory::new();
        memory.push(episode(20));
        memory.push(episode(200));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let batch = sample_batch(&memory, 10_000, 16, Padding::FreezeTerminal, &mut rng);
        let short = batch.iter().filter(|s| s.episode == 0).count() as f64 / 10_000.0;
        assert!((short - 0.5).abs() < 0.02, "{short}");
        assert!(batch.iter().filter(|s| s.episode == 0).all(|s| s.start <= 4));
    }

    #[test]
    fn skip_short_ignores_short_episodes() {
        let mut memory = ReplayMemory::new();
        memory.push(episode(5));
        memory.push(episode(30));
        let batch = sample_batch(&memory, 100, 16, Padding::SkipShort, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(batch.iter().all(|s| s.episode == 1));
        let mut only_short = ReplayMemory::new();
        only_short.push(episode(5));
        assert!(sample_batch(&only_short, 10, 16, Padding::SkipShort, &mut ChaCha8Rng::seed_from_u64(1)).is_empty());
    }
}
