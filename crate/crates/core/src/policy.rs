//! Action selection over tabular values.

use crate::error::{contract, Result};
use crate::rng::RandomStream;
use crate::table::{ActionId, QTable, StateId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieRule {
    /// Uniform among maximizers, drawing from the run's stream.
    #[default]
    Uniform,
    /// Lowest index among maximizers; draws nothing.
    First,
}

/// Index of a maximal entry of `values`.
///
/// With [`TieRule::Uniform`] a draw is consumed only when there is an actual
/// tie, so runs with distinct values never depend on tie-breaking draws.
pub fn argmax(values: &[f64], tie: TieRule, rng: &mut RandomStream) -> usize {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut first = usize::MAX;
    let mut count = 0usize;
    for (i, &v) in values.iter().enumerate() {
        if v == best {
            if count == 0 {
                first = i;
            }
            count += 1;
        }
    }
    if count <= 1 || tie == TieRule::First {
        return first;
    }
    let pick = rng.below(count);
    values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == best)
        .nth(pick)
        .map(|(i, _)| i)
        .unwrap_or(first)
}

pub fn greedy_action(q: &QTable, s: StateId, tie: TieRule, rng: &mut RandomStream) -> ActionId {
    ActionId(argmax(q.row(s), tie, rng))
}

pub fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(contract(format!("epsilon {epsilon} outside [0, 1]")));
    }
    Ok(())
}

/// With probability `1 - ε` the greedy action, otherwise a uniform action.
pub fn epsilon_greedy(
    q: &QTable,
    s: StateId,
    epsilon: f64,
    rng: &mut RandomStream,
) -> Result<ActionId> {
    check_epsilon(epsilon)?;
    Ok(ActionId(epsilon_greedy_index(q.row(s), epsilon, rng)))
}

pub(crate) fn epsilon_greedy_index(values: &[f64], epsilon: f64, rng: &mut RandomStream) -> usize {
    if epsilon > 0.0 && rng.uniform() < epsilon {
        rng.below(values.len())
    } else {
        argmax(values, TieRule::Uniform, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_row(values: &[f64]) -> QTable {
        QTable::from_values(1, values.len(), values.to_vec()).unwrap()
    }

    #[test]
    fn unique_max() {
        let q = one_row(&[0.0, 1.0, 0.0]);
        let mut rng = RandomStream::new(0);
        assert_eq!(greedy_action(&q, StateId(0), TieRule::Uniform, &mut rng), ActionId(1));
    }

    #[test]
    fn two_way_tie_is_fair() {
        let q = one_row(&[2.0, 2.0]);
        let mut rng = RandomStream::new(5);
        let n = 10_000;
        let ones = (0..n)
            .filter(|_| greedy_action(&q, StateId(0), TieRule::Uniform, &mut rng) == ActionId(1))
            .count();
        let f = ones as f64 / n as f64;
        assert!((f - 0.5).abs() <= 0.05, "{f}");
    }

    #[test]
    fn all_tied_returns_a_maximizer() {
        let q = one_row(&[3.0, 3.0, 3.0]);
        let mut rng = RandomStream::new(1);
        for _ in 0..100 {
            let a = greedy_action(&q, StateId(0), TieRule::Uniform, &mut rng);
            assert!(a.0 < 3);
        }
        assert_eq!(greedy_action(&q, StateId(0), TieRule::First, &mut rng), ActionId(0));
    }

    #[test]
    fn epsilon_zero_is_greedy() {
        let q = one_row(&[0.0, 5.0, 1.0]);
        let mut rng = RandomStream::new(2);
        for _ in 0..1000 {
            assert_eq!(epsilon_greedy(&q, StateId(0), 0.0, &mut rng).unwrap(), ActionId(1));
        }
    }

    #[test]
    fn epsilon_one_is_uniform() {
        let q = one_row(&[0.0, 5.0, 1.0]);
        let mut rng = RandomStream::new(3);
        let n = 10_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[epsilon_greedy(&q, StateId(0), 1.0, &mut rng).unwrap().0] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 3.0).abs() <= 0.05, "{counts:?}");
        }
    }

    #[test]
    fn epsilon_tenth_mixture_frequency() {
        // P(greedy) = 1 - ε + ε/|A| = 0.95
        let q = one_row(&[0.0, 1.0]);
        let mut rng = RandomStream::new(4);
        let n = 10_000;
        let hits = (0..n)
            .filter(|_| epsilon_greedy(&q, StateId(0), 0.1, &mut rng).unwrap() == ActionId(1))
            .count();
        let f = hits as f64 / n as f64;
        assert!((f - 0.95).abs() <= 0.02, "{f}");
    }

    #[test]
    fn epsilon_chi_square() {
        // Distribution (1-ε)·argmax-uniform + ε·uniform over 4 actions with a
        // two-way tie; 3 degrees of freedom, 99.9% critical value 16.27.
        let q = one_row(&[1.0, 3.0, 3.0, 0.0]);
        let eps = 0.3;
        let expected = [eps / 4.0, (1.0 - eps) / 2.0 + eps / 4.0, (1.0 - eps) / 2.0 + eps / 4.0, eps / 4.0];
        let mut rng = RandomStream::new(99);
        let n = 20_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[epsilon_greedy(&q, StateId(0), eps, &mut rng).unwrap().0] += 1;
        }
        let chi2: f64 = counts
            .iter()
            .zip(expected)
            .map(|(&c, p)| {
                let e = p * n as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        assert!(chi2 < 16.27, "chi2 = {chi2}, counts {counts:?}");
    }

    #[test]
    fn epsilon_out_of_range() {
        let q = one_row(&[0.0]);
        let mut rng = RandomStream::new(0);
        assert!(epsilon_greedy(&q, StateId(0), 1.5, &mut rng).is_err());
        assert!(epsilon_greedy(&q, StateId(0), -0.1, &mut rng).is_err());
    }
}
