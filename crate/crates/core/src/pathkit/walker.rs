//! Streaming Liouville Brownian motion: a Brownian walker that carries its
//! clock along without storing the path.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::grid::{wrap_unit, TorusPoint};
use crate::harness::seed::SeedTree;

use super::LbmModel;

/// One node of the discretized path together with the clock increment over
/// the following step.
#[derive(Debug, Clone, Copy)]
pub struct Node {
    /// Unwrapped position.
    pub pos: [f64; 2],
    /// Brownian time `k dt`.
    pub time: f64,
    /// Clock value `F_k`.
    pub clock: f64,
    /// `F_{k+1} - F_k`.
    pub increment: f64,
}

impl Node {
    pub fn point(&self) -> TorusPoint {
        TorusPoint::new(self.pos[0], self.pos[1])
    }
}

/// Brownian walker with a one-step look-ahead, so that clock inversion can
/// interpolate between the current node and the next.
#[derive(Debug, Clone)]
pub struct Walker<'a> {
    model: &'a LbmModel,
    rng: ChaCha8Rng,
    sd: f64,
    steps: u64,
    weight_sum: f64,
    current: Node,
    next_pos: [f64; 2],
}

impl<'a> Walker<'a> {
    pub fn new(model: &'a LbmModel, start: TorusPoint, seed: u64) -> Self {
        let mut rng = SeedTree::new(seed).rng();
        let sd = model.dt().sqrt();
        let pos = [start.x, start.y];
        let weight_sum = model.density().weight(start);
        let current = Node {
            pos,
            time: 0.0,
            clock: 0.0,
            increment: weight_sum * model.dt(),
        };
        let next_pos = gaussian_step(&mut rng, pos, sd);
        Self {
            model,
            rng,
            sd,
            steps: 0,
            weight_sum,
            current,
            next_pos,
        }
    }

    #[inline]
    pub fn current(&self) -> &Node {
        &self.current
    }

    /// Unwrapped position of the node after the current one.
    #[inline]
    pub fn next_pos(&self) -> [f64; 2] {
        self.next_pos
    }

    #[inline]
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Moves to the next node.
    #[inline]
    pub fn advance(&mut self) {
        let pos = self.next_pos;
        let clock = self.current.clock + self.current.increment;
        let p = TorusPoint {
            x: wrap_unit(pos[0]),
            y: wrap_unit(pos[1]),
        };
        let dt = self.model.dt();
        self.steps += 1;
        self.weight_sum += self.model.density().weight(p);
        self.current = Node {
            pos,
            time: self.steps as f64 * dt,
            clock,
            increment: self.weight_sum * dt - clock,
        };
        self.next_pos = gaussian_step(&mut self.rng, pos, self.sd);
    }

    /// Advances until `F_k <= tau < F_{k+1}` and returns the position at
    /// quantum time `tau`, interpolated linearly on the unwrapped lift.
    ///
    /// `tau` must not lie before the current node.
    pub fn position_at(&mut self, tau: f64) -> TorusPoint {
        while self.current.clock + self.current.increment <= tau {
            self.advance();
        }
        let c = &self.current;
        let frac = ((tau - c.clock) / c.increment).clamp(0.0, 1.0);
        TorusPoint::new(
            c.pos[0] + frac * (self.next_pos[0] - c.pos[0]),
            c.pos[1] + frac * (self.next_pos[1] - c.pos[1]),
        )
    }
}

#[inline]
fn gaussian_step(rng: &mut ChaCha8Rng, pos: [f64; 2], sd: f64) -> [f64; 2] {
    let a: f64 = StandardNormal.sample(rng);
    let b: f64 = StandardNormal.sample(rng);
    [pos[0] + sd * a, pos[1] + sd * b]
}

/// Draws the unwrapped increments of a path, shared with [`super::brownian_path`].
pub(crate) fn increments(seed: u64, steps: usize, dt: f64) -> Vec<[f64; 2]> {
    let mut rng = SeedTree::new(seed).rng();
    let sd = dt.sqrt();
    (0..steps)
        .map(|_| gaussian_step(&mut rng, [0.0, 0.0], sd))
        .collect()
}
