//! Region permissions: subsets of {r, w, x, l} ordered by set inclusion.
//!
//! The `l` (lock) bit is the globally exclusive permission: while one
//! accessor holds it, every other accessor's view of the region is
//! temporarily disabled.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A permission set. The partial order (`PartialOrd`) is set inclusion,
/// with `----` as bottom and `rwxl` as top.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Permission(u8);

const BIT_R: u8 = 0b0001;
const BIT_W: u8 = 0b0010;
const BIT_X: u8 = 0b0100;
const BIT_L: u8 = 0b1000;
const ALL: u8 = BIT_R | BIT_W | BIT_X | BIT_L;

impl Permission {
    pub const EMPTY: Permission = Permission(0);
    pub const R: Permission = Permission(BIT_R);
    pub const W: Permission = Permission(BIT_W);
    pub const X: Permission = Permission(BIT_X);
    pub const L: Permission = Permission(BIT_L);
    pub const RW: Permission = Permission(BIT_R | BIT_W);
    pub const RWX: Permission = Permission(BIT_R | BIT_W | BIT_X);
    pub const RWL: Permission = Permission(BIT_R | BIT_W | BIT_L);
    pub const RWXL: Permission = Permission(ALL);

    pub fn has_read(self) -> bool {
        self.0 & BIT_R != 0
    }

    pub fn has_write(self) -> bool {
        self.0 & BIT_W != 0
    }

    pub fn has_exec(self) -> bool {
        self.0 & BIT_X != 0
    }

    pub fn has_lock(self) -> bool {
        self.0 & BIT_L != 0
    }

    /// Set union.
    pub fn union(self, other: Permission) -> Permission {
        Permission(self.0 | other.0)
    }

    /// Set intersection.
    pub fn intersect(self, other: Permission) -> Permission {
        Permission(self.0 & other.0)
    }

    /// Remove the lock bit.
    pub fn without_lock(self) -> Permission {
        Permission(self.0 & !BIT_L)
    }

    /// Add the lock bit.
    pub fn with_lock(self) -> Permission {
        Permission(self.0 | BIT_L)
    }

    /// The r/w/x subset (what a PMP entry can express).
    pub fn rwx_bits(self) -> Permission {
        Permission(self.0 & (BIT_R | BIT_W | BIT_X))
    }

    /// `self ≤ other` in the lattice, i.e. `self ⊆ other`.
    pub fn le(self, other: Permission) -> bool {
        self.0 & other.0 == self.0
    }

    /// All 16 elements of the lattice, bottom first.
    pub fn all() -> impl Iterator<Item = Permission> {
        (0..=ALL).map(Permission)
    }

    pub fn bits(self) -> u8 {
        self.0
    }
}

impl PartialOrd for Permission {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        use std::cmp::Ordering::*;
        match (Permission::le(*self, *other), Permission::le(*other, *self)) {
            (true, true) => Some(Equal),
            (true, false) => Some(Less),
            (false, true) => Some(Greater),
            (false, false) => None,
        }
    }
}

impl fmt::Display for Permission {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}{}{}",
            if self.has_read() { 'r' } else { '-' },
            if self.has_write() { 'w' } else { '-' },
            if self.has_exec() { 'x' } else { '-' },
            if self.has_lock() { 'l' } else { '-' },
        )
    }
}

impl fmt::Debug for Permission {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Permission {
    type Err = String;

    /// Parses the four-position rendering, e.g. `rw-l` or `r---`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 4 {
            return Err(format!("permission must be 4 characters, got {s:?}"));
        }
        let mut bits = 0u8;
        for (i, (c, (on, bit))) in s
            .chars()
            .zip([('r', BIT_R), ('w', BIT_W), ('x', BIT_X), ('l', BIT_L)])
            .enumerate()
        {
            if c == on {
                bits |= bit;
            } else if c != '-' {
                return Err(format!("bad character {c:?} at position {i} in {s:?}"));
            }
        }
        Ok(Permission(bits))
    }
}

impl TryFrom<String> for Permission {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<Permission> for String {
    fn from(p: Permission) -> String {
        p.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_perm() -> impl Strategy<Value = Permission> {
        (0..=ALL).prop_map(Permission)
    }

    #[test]
    fn render_and_parse() {
        assert_eq!(Permission::RWXL.to_string(), "rwxl");
        assert_eq!(Permission::EMPTY.to_string(), "----");
        assert_eq!("rw-l".parse::<Permission>().unwrap(), Permission::RWL);
        assert_eq!("r---".parse::<Permission>().unwrap(), Permission::R);
        assert!("rwl".parse::<Permission>().is_err());
        assert!("rwzl".parse::<Permission>().is_err());
    }

    #[test]
    fn bottom_and_top() {
        for p in Permission::all() {
            assert!(Permission::EMPTY.le(p));
            assert!(p.le(Permission::RWXL));
        }
    }

    #[test]
    fn incomparable_elements_exist() {
        assert_eq!(Permission::R.partial_cmp(&Permission::W), None);
        assert_eq!(Permission::RW.partial_cmp(&Permission::X), None);
    }

    proptest! {
        #[test]
        fn reflexive(a in arb_perm()) {
            prop_assert!(a.le(a));
        }

        #[test]
        fn antisymmetric(a in arb_perm(), b in arb_perm()) {
            if a.le(b) && b.le(a) {
                prop_assert_eq!(a, b);
            }
        }

        #[test]
        fn transitive(a in arb_perm(), b in arb_perm(), c in arb_perm()) {
            if a.le(b) && b.le(c) {
                prop_assert!(a.le(c));
            }
        }

        #[test]
        fn display_roundtrip(a in arb_perm()) {
            prop_assert_eq!(a.to_string().parse::<Permission>().unwrap(), a);
        }
    }
}
