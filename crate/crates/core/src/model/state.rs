use serde::{Deserialize, Serialize};

/// Joint default indicator of the two firms: `h_a = 1` once firm A has
/// defaulted, `h_b = 1` once firm B has.
///
/// Exactly four states exist. In ordered-default mode the chain is
/// `(0,0) → (1,0) → (1,1)` and `(0,1)` is unreachable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DefaultState {
    pub h_a: bool,
    pub h_b: bool,
}

impl DefaultState {
    pub const NONE: DefaultState = DefaultState { h_a: false, h_b: false };
    pub const A_ONLY: DefaultState = DefaultState { h_a: true, h_b: false };
    pub const B_ONLY: DefaultState = DefaultState { h_a: false, h_b: true };
    pub const BOTH: DefaultState = DefaultState { h_a: true, h_b: true };

    /// All four states, indexed consistently with [`DefaultState::index`].
    pub const ALL: [DefaultState; 4] =
        [Self::NONE, Self::A_ONLY, Self::B_ONLY, Self::BOTH];

    /// Dense index: `h_a + 2·h_b` (NONE=0, A_ONLY=1, B_ONLY=2, BOTH=3).
    pub const fn index(self) -> usize {
        self.h_a as usize + 2 * (self.h_b as usize)
    }

    pub const fn from_index(i: usize) -> DefaultState {
        DefaultState { h_a: i & 1 != 0, h_b: i & 2 != 0 }
    }

    /// State after firm A defaults.
    pub const fn after_a(self) -> DefaultState {
        DefaultState { h_a: true, h_b: self.h_b }
    }

    /// State after firm B defaults.
    pub const fn after_b(self) -> DefaultState {
        DefaultState { h_a: self.h_a, h_b: true }
    }

    /// Ordered-mode regime index: NONE=0, A_ONLY=1, BOTH=2.
    /// `None` for the state (0,1), which the ordered chain never visits.
    pub const fn regime(self) -> Option<usize> {
        match (self.h_a, self.h_b) {
            (false, false) => Some(0),
            (true, false) => Some(1),
            (true, true) => Some(2),
            (false, true) => None,
        }
    }

    pub const fn from_regime(k: usize) -> DefaultState {
        match k {
            0 => Self::NONE,
            1 => Self::A_ONLY,
            _ => Self::BOTH,
        }
    }

    /// Partial order on default states: `self ≤ other` iff no firm recovers.
    pub const fn le(self, other: DefaultState) -> bool {
        (!self.h_a || other.h_a) && (!self.h_b || other.h_b)
    }

    pub fn label(self) -> &'static str {
        match (self.h_a, self.h_b) {
            (false, false) => "00",
            (true, false) => "10",
            (false, true) => "01",
            (true, true) => "11",
        }
    }
}
