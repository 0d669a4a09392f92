//! Logistic-map chaos source and crossover masks.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Logistic-map control parameter giving fully chaotic behaviour.
pub const CHAOS_U: f64 = 4.0;

/// Orbits that reach 0 or 1 within this many steps are refused as seeds.
const SEED_LOOKAHEAD: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChaosError {
    #[error("chaos state {0} is outside (0, 1)")]
    OutOfRange(f64),
    #[error("mask length must be at least 1")]
    EmptyMask,
    #[error("seed {0} is not admissible (degenerate or fixed orbit)")]
    InadmissibleSeed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChaosState {
    pub x: f64,
    pub u: f64,
}

impl ChaosState {
    pub fn new(x: f64, u: f64) -> Result<Self, ChaosError> {
        if x > 0.0 && x < 1.0 {
            Ok(Self { x, u })
        } else {
            Err(ChaosError::OutOfRange(x))
        }
    }

    /// `x' = u·x·(1 - x)`.
    pub fn next(self) -> Result<Self, ChaosError> {
        if !(self.x > 0.0 && self.x < 1.0) {
            return Err(ChaosError::OutOfRange(self.x));
        }
        Ok(Self { x: self.u * self.x * (1.0 - self.x), u: self.u })
    }

    /// Whether `x` avoids the fixed/degenerate orbits of the map at `u`.
    pub fn is_admissible(x: f64, u: f64) -> bool {
        if !(x > 0.0 && x < 1.0) || [0.25, 0.5, 0.75].contains(&x) {
            return false;
        }
        let mut s = Self { x, u };
        for _ in 0..SEED_LOOKAHEAD {
            match s.next() {
                Ok(n) if n.x > 0.0 && n.x < 1.0 => s = n,
                _ => return false,
            }
        }
        true
    }

    pub fn admissible(x: f64, u: f64) -> Result<Self, ChaosError> {
        if Self::is_admissible(x, u) {
            Ok(Self { x, u })
        } else {
            Err(ChaosError::InadmissibleSeed(x))
        }
    }

    pub fn random_admissible<R: Rng>(u: f64, rng: &mut R) -> Self {
        loop {
            let x: f64 = rng.gen();
            if Self::is_admissible(x, u) {
                return Self { x, u };
            }
        }
    }
}

/// `1` where the iterate is at least 0.5.
pub fn mask_from_sequence(values: &[f64]) -> Vec<bool> {
    values.iter().map(|&x| x >= 0.5).collect()
}

/// Advances `state` `len` times and thresholds each new iterate.
pub fn chaos_mask(len: usize, state: ChaosState) -> Result<(Vec<bool>, ChaosState), ChaosError> {
    if len == 0 {
        return Err(ChaosError::EmptyMask);
    }
    let mut s = state;
    let mut mask = Vec::with_capacity(len);
    for _ in 0..len {
        s = s.next()?;
        if !(s.x > 0.0 && s.x < 1.0) {
            return Err(ChaosError::OutOfRange(s.x));
        }
        mask.push(s.x >= 0.5);
    }
    Ok((mask, s))
}

/// One chaos state shared across a solver run. Finite-precision orbits can
/// collapse onto 0; the source then restarts from a fresh admissible seed.
#[derive(Debug, Clone)]
pub struct ChaosSource {
    state: ChaosState,
    reseeds: usize,
}

impl ChaosSource {
    pub fn new(state: ChaosState) -> Self {
        Self { state, reseeds: 0 }
    }

    pub fn state(&self) -> ChaosState {
        self.state
    }

    pub fn reseeds(&self) -> usize {
        self.reseeds
    }

    pub fn mask<R: Rng>(&mut self, len: usize, rng: &mut R) -> Vec<bool> {
        loop {
            match chaos_mask(len.max(1), self.state) {
                Ok((mask, next)) => {
                    self.state = next;
                    return mask;
                }
                Err(_) => {
                    self.state = ChaosState::random_admissible(self.state.u, rng);
                    self.reseeds += 1;
                }
            }
        }
    }
}
