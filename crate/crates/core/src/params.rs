//! Map constants shared by every simulation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constants of the (two-particle) quantum standard map.
///
/// `hbar` is the period of free rotation `T`, which plays the role of the
/// effective Planck constant; `kick` is `k = K / hbar`. The interaction is a
/// diagonal phase `U` for coinciding momenta and `U/2` for momenta within
/// `range` lattice steps (periodically wrapped).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub n: usize,
    pub chaos: f64,
    pub hbar: f64,
    pub kick: f64,
    pub interaction: f64,
    pub range: usize,
}

impl SimParams {
    /// Builds parameters from `K` and `hbar`; `k` is derived.
    pub fn new(n: usize, chaos: f64, hbar: f64, interaction: f64, range: usize) -> Result<Self> {
        let p = SimParams {
            n,
            chaos,
            hbar,
            kick: chaos / hbar,
            interaction,
            range,
        };
        p.validate()?;
        Ok(p)
    }

    /// The absorbing-border configuration: `k = N/8`, `hbar = K/k`.
    pub fn recurrence(n: usize, chaos: f64, interaction: f64, range: usize) -> Result<Self> {
        let kick = n as f64 / 8.0;
        let p = SimParams {
            n,
            chaos,
            hbar: chaos / kick,
            kick,
            interaction,
            range,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.n.is_power_of_two() || self.n < 8 {
            return Err(Error::params(format!(
                "N = {} must be a power of two >= 8",
                self.n
            )));
        }
        for (name, v) in [
            ("K", self.chaos),
            ("hbar", self.hbar),
            ("k", self.kick),
            ("U", self.interaction),
        ] {
            if !v.is_finite() {
                return Err(Error::params(format!("{name} = {v} is not finite")));
            }
        }
        if self.hbar <= 0.0 {
            return Err(Error::params(format!("hbar = {} must be positive", self.hbar)));
        }
        if (self.kick * self.hbar - self.chaos).abs() > 1e-12 * self.chaos.abs() {
            return Err(Error::params(format!(
                "k * hbar = {} differs from K = {}",
                self.kick * self.hbar,
                self.chaos
            )));
        }
        if self.range >= self.n / 2 {
            return Err(Error::params(format!(
                "interaction range {} must be below N/2 = {}",
                self.range,
                self.n / 2
            )));
        }
        Ok(())
    }

    /// Same map with a different kick strength; `K` follows.
    pub fn with_kick(mut self, kick: f64) -> Self {
        self.kick = kick;
        self.chaos = kick * self.hbar;
        self
    }

    pub fn with_interaction(mut self, interaction: f64) -> Self {
        self.interaction = interaction;
        self
    }

    pub fn with_range(mut self, range: usize) -> Self {
        self.range = range;
        self
    }

    pub fn with_size(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    /// Smallest lattice momentum, `-N/2`.
    pub fn p_min(&self) -> i64 {
        -(self.n as i64) / 2
    }

    pub fn is_interacting(&self) -> bool {
        self.interaction != 0.0
    }
}

/// Maps an integer momentum in `[-N/2, N/2)` to its array slot (`p mod N`).
#[inline]
pub fn momentum_index(p: i64, n: usize) -> usize {
    p.rem_euclid(n as i64) as usize
}

/// Inverse of [`momentum_index`].
#[inline]
pub fn index_momentum(j: usize, n: usize) -> i64 {
    if j < n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

pub fn check_momentum(p: i64, n: usize) -> Result<()> {
    let half = (n / 2) as i64;
    if p < -half || p >= half {
        Err(Error::contract(format!(
            "momentum {p} outside lattice [-{half}, {half})"
        )))
    } else {
        Ok(())
    }
}
