use std::fmt;

use super::ground::AtomId;

/// A set of true atoms of one grounded instance.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State {
    instance: u32,
    bits: Box<[u64]>,
}

impl State {
    pub fn empty(instance: u32, num_atoms: usize) -> Self {
        State {
            instance,
            bits: vec![0; num_atoms.div_ceil(64)].into_boxed_slice(),
        }
    }

    pub fn from_atoms(
        instance: u32,
        num_atoms: usize,
        atoms: impl IntoIterator<Item = AtomId>,
    ) -> Self {
        let mut s = Self::empty(instance, num_atoms);
        for a in atoms {
            s.bits[a as usize / 64] |= 1 << (a % 64);
        }
        s
    }

    pub fn instance(&self) -> u32 {
        self.instance
    }

    #[inline]
    pub fn holds(&self, atom: AtomId) -> bool {
        self.bits
            .get(atom as usize / 64)
            .is_some_and(|w| w & (1 << (atom % 64)) != 0)
    }

    /// `(self \ del) ∪ add`.
    pub fn apply(&self, del: &[AtomId], add: &[AtomId]) -> State {
        let mut bits = self.bits.clone();
        for &d in del {
            bits[d as usize / 64] &= !(1 << (d % 64));
        }
        for &a in add {
            bits[a as usize / 64] |= 1 << (a % 64);
        }
        State {
            instance: self.instance,
            bits,
        }
    }

    pub fn atoms(&self) -> impl Iterator<Item = AtomId> + '_ {
        self.bits.iter().enumerate().flat_map(|(w, &word)| {
            (0..64u32)
                .filter(move |b| word & (1 << b) != 0)
                .map(move |b| w as u32 * 64 + b)
        })
    }

    pub fn len(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&w| w == 0)
    }
}

impl fmt::Debug for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "State#{}", self.instance)?;
        f.debug_set().entries(self.atoms()).finish()
    }
}
