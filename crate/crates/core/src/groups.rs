//! Finite symmetry groups and the permutation representations through which
//! they act on layer spaces.
//!
//! Every action shipped here is an exact index permutation, so each
//! representation is an isometry (operator bound 1) and applying it is
//! differentiable through the tape's `gather`.

use std::fmt;
use std::rc::Rc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{AceError, Result};
use crate::tensor::Tensor;

/// Largest `n` for which `S_n` is enumerated (720 elements).
pub const MAX_ENUMERABLE_SYMMETRIC: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Group {
    /// Rotations of a square grid by multiples of 90 degrees.
    C4,
    /// Permutations of `n` set elements.
    Symmetric(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum GroupElement {
    /// Number of counter-clockwise quarter turns, `0..4`.
    Rotation(u8),
    /// `perm[i]` is the source row of output row `i`.
    Permutation(Vec<usize>),
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupElement::Rotation(r) => write!(f, "r{r}"),
            GroupElement::Permutation(p) => write!(f, "{p:?}"),
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Group::C4 => write!(f, "C4"),
            Group::Symmetric(n) => write!(f, "S{n}"),
        }
    }
}

impl Group {
    pub fn identity(&self) -> GroupElement {
        match self {
            Group::C4 => GroupElement::Rotation(0),
            Group::Symmetric(n) => GroupElement::Permutation((0..*n).collect()),
        }
    }

    pub fn contains(&self, g: &GroupElement) -> bool {
        match (self, g) {
            (Group::C4, GroupElement::Rotation(r)) => *r < 4,
            (Group::Symmetric(n), GroupElement::Permutation(p)) => {
                let mut seen = vec![false; *n];
                p.len() == *n
                    && p.iter().all(|&i| i < *n && !std::mem::replace(&mut seen[i], true))
            }
            _ => false,
        }
    }

    fn check(&self, g: &GroupElement) -> Result<()> {
        if self.contains(g) {
            Ok(())
        } else {
            Err(AceError::ForeignElement {
                element: g.to_string(),
                group: self.to_string(),
            })
        }
    }

    /// Product `a·b`, defined so that `ρ(a·b) = ρ(a)∘ρ(b)` for every
    /// representation in this module.
    pub fn compose(&self, a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
        self.check(a)?;
        self.check(b)?;
        Ok(match (a, b) {
            (GroupElement::Rotation(x), GroupElement::Rotation(y)) => GroupElement::Rotation((x + y) % 4),
            (GroupElement::Permutation(p), GroupElement::Permutation(q)) => {
                // (ρ(p)ρ(q)z)[i] = (ρ(q)z)[p[i]] = z[q[p[i]]]
                GroupElement::Permutation(p.iter().map(|&i| q[i]).collect())
            }
            _ => unreachable!("membership checked above"),
        })
    }

    pub fn inverse(&self, a: &GroupElement) -> Result<GroupElement> {
        self.check(a)?;
        Ok(match a {
            GroupElement::Rotation(r) => GroupElement::Rotation((4 - r) % 4),
            GroupElement::Permutation(p) => {
                let mut inv = vec![0; p.len()];
                for (i, &pi) in p.iter().enumerate() {
                    inv[pi] = i;
                }
                GroupElement::Permutation(inv)
            }
        })
    }

    pub fn is_enumerable(&self) -> bool {
        match self {
            Group::C4 => true,
            Group::Symmetric(n) => *n <= MAX_ENUMERABLE_SYMMETRIC,
        }
    }

    /// All elements, identity first. Refuses groups too large to list.
    pub fn elements(&self) -> Result<Vec<GroupElement>> {
        match self {
            Group::C4 => Ok((0..4).map(GroupElement::Rotation).collect()),
            Group::Symmetric(n) if *n <= MAX_ENUMERABLE_SYMMETRIC => {
                let mut perm: Vec<usize> = (0..*n).collect();
                let mut out = vec![GroupElement::Permutation(perm.clone())];
                while next_permutation(&mut perm) {
                    out.push(GroupElement::Permutation(perm.clone()));
                }
                Ok(out)
            }
            Group::Symmetric(_) => Err(AceError::NotEnumerable(self.to_string())),
        }
    }

    /// Uniform draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GroupElement {
        match self {
            Group::C4 => GroupElement::Rotation(rng.gen_range(0..4)),
            Group::Symmetric(n) => {
                let mut p: Vec<usize> = (0..*n).collect();
                p.shuffle(rng);
                GroupElement::Permutation(p)
            }
        }
    }
}

/// Lexicographic successor; returns false after the last permutation.
fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Shape of a layer space, which determines how a group acts on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    /// `C×H×W` image; C4 rotates every channel spatially.
    Image { channels: usize, height: usize, width: usize },
    /// `4×C×H×W` regular-representation feature map of C4.
    Regular { channels: usize, height: usize, width: usize },
    /// `n×d` set of `n` rows; `S_n` permutes rows.
    Set { n: usize, d: usize },
    /// Plain vector on which every group acts trivially.
    Vector { k: usize },
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Space::Image { channels, height, width } => write!(f, "image {channels}x{height}x{width}"),
            Space::Regular { channels, height, width } => write!(f, "regular 4x{channels}x{height}x{width}"),
            Space::Set { n, d } => write!(f, "set {n}x{d}"),
            Space::Vector { k } => write!(f, "vector {k}"),
        }
    }
}

impl Space {
    pub fn shape(&self) -> Vec<usize> {
        match *self {
            Space::Image { channels, height, width } => vec![channels, height, width],
            Space::Regular { channels, height, width } => vec![4, channels, height, width],
            Space::Set { n, d } => vec![n, d],
            Space::Vector { k } => vec![k],
        }
    }

    pub fn numel(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn check(&self, t: &Tensor) -> Result<()> {
        if t.shape() == self.shape().as_slice() {
            Ok(())
        } else {
            Err(AceError::SpaceMismatch {
                expected: self.to_string(),
                got: format!("tensor {:?}", t.shape()),
            })
        }
    }
}

/// Source coordinates of output pixel `(i, j)` after `r` counter-clockwise
/// quarter turns of a `side×side` grid.
#[inline]
pub(crate) fn rotated_source(mut i: usize, mut j: usize, r: u8, side: usize) -> (usize, usize) {
    for _ in 0..r {
        let (ni, nj) = (j, side - 1 - i);
        i = ni;
        j = nj;
    }
    (i, j)
}

fn rotation_index(channels: usize, side: usize, r: u8) -> Vec<usize> {
    let mut idx = Vec::with_capacity(channels * side * side);
    for c in 0..channels {
        for i in 0..side {
            for j in 0..side {
                let (si, sj) = rotated_source(i, j, r, side);
                idx.push((c * side + si) * side + sj);
            }
        }
    }
    idx
}

fn regular_index(channels: usize, side: usize, r: u8) -> Vec<usize> {
    let plane = channels * side * side;
    let spatial = rotation_index(channels, side, r);
    let mut idx = Vec::with_capacity(4 * plane);
    for h in 0..4u8 {
        let src_h = ((h + 4 - r) % 4) as usize;
        idx.extend(spatial.iter().map(|s| src_h * plane + s));
    }
    idx
}

/// A group acting on one layer space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Representation {
    pub group: Group,
    pub space: Space,
}

impl Representation {
    pub fn new(group: Group, space: Space) -> Result<Self> {
        let ok = match (&group, &space) {
            (_, Space::Vector { .. }) => true,
            (Group::C4, Space::Image { height, width, .. } | Space::Regular { height, width, .. }) => {
                height == width
            }
            (Group::Symmetric(n), Space::Set { n: rows, .. }) => n == rows,
            _ => false,
        };
        if ok {
            Ok(Self { group, space })
        } else {
            Err(AceError::UnsupportedAction {
                group: group.to_string(),
                space: space.to_string(),
            })
        }
    }

    /// Flat index map of `ρ(g)`: `(ρ(g)z)[i] = z[map[i]]`.
    pub fn index_map(&self, g: &GroupElement) -> Result<Vec<usize>> {
        self.group.check(g)?;
        Ok(match (self.space, g) {
            (Space::Vector { k }, _) => (0..k).collect(),
            (Space::Image { channels, height, .. }, GroupElement::Rotation(r)) => rotation_index(channels, height, *r),
            (Space::Regular { channels, height, .. }, GroupElement::Rotation(r)) => regular_index(channels, height, *r),
            (Space::Set { n, d }, GroupElement::Permutation(p)) => {
                (0..n).flat_map(|i| (0..d).map(move |c| p[i] * d + c)).collect()
            }
            _ => {
                return Err(AceError::UnsupportedAction {
                    group: self.group.to_string(),
                    space: self.space.to_string(),
                })
            }
        })
    }

    /// `ρ(g)z`.
    pub fn apply(&self, g: &GroupElement, z: &Tensor) -> Result<Tensor> {
        self.space.check(z)?;
        let map = self.index_map(g)?;
        z.gather(Rc::new(map), z.shape())
    }

    /// Bound on `‖ρ(g)z‖ / ‖z‖`; permutation actions are isometries.
    pub fn operator_bound(&self) -> f64 {
        1.0
    }
}

/// Applies `g` through the representation `rep`.
pub fn apply(g: &GroupElement, rep: &Representation, z: &Tensor) -> Result<Tensor> {
    rep.apply(g, z)
}

/// Regular representation of C4 on a `4×C×H×W` map: rotates every plane
/// spatially and shifts the group axis cyclically.
pub fn apply_regular(g: &GroupElement, z: &Tensor) -> Result<Tensor> {
    let shape = z.shape();
    if shape.len() != 4 || shape[0] != 4 {
        return Err(AceError::InvalidShape {
            shape: shape.to_vec(),
            reason: "regular representation needs a leading group axis of length 4".into(),
        });
    }
    let space = Space::Regular {
        channels: shape[1],
        height: shape[2],
        width: shape[3],
    };
    Representation::new(Group::C4, space)?.apply(g, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::new((0..n).map(|i| i as f64 * 0.5 - 3.0).collect(), shape).unwrap()
    }

    #[test]
    fn rotate_by_zero_is_identity_and_four_turns_close() {
        let rep = Representation::new(Group::C4, Space::Image { channels: 2, height: 5, width: 5 }).unwrap();
        let z = ramp(&[2, 5, 5]);
        assert_eq!(rep.apply(&GroupElement::Rotation(0), &z).unwrap().to_vec(), z.to_vec());
        let mut w = z.clone();
        for _ in 0..4 {
            w = rep.apply(&GroupElement::Rotation(1), &w).unwrap();
        }
        assert_eq!(w.to_vec(), z.to_vec());
    }

    #[test]
    fn single_turn_is_counter_clockwise() {
        // [[1,2],[3,4]] rotated a quarter turn counter-clockwise is [[2,4],[1,3]].
        let rep = Representation::new(Group::C4, Space::Image { channels: 1, height: 2, width: 2 }).unwrap();
        let z = Tensor::new(vec![1.0, 2.0, 3.0, 4.0], &[1, 2, 2]).unwrap();
        let r = rep.apply(&GroupElement::Rotation(1), &z).unwrap();
        assert_eq!(r.to_vec(), vec![2.0, 4.0, 1.0, 3.0]);
    }

    #[test]
    fn permutation_acts_on_rows() {
        let rep = Representation::new(Group::Symmetric(3), Space::Set { n: 3, d: 1 }).unwrap();
        let z = Tensor::new(vec![10.0, 20.0, 30.0], &[3, 1]).unwrap();
        let out = rep.apply(&GroupElement::Permutation(vec![1, 2, 0]), &z).unwrap();
        assert_eq!(out.to_vec(), vec![20.0, 30.0, 10.0]);
    }

    #[test]
    fn element_counts() {
        assert_eq!(Group::C4.elements().unwrap().len(), 4);
        assert_eq!(Group::Symmetric(3).elements().unwrap().len(), 6);
        assert_eq!(Group::Symmetric(6).elements().unwrap().len(), 720);
        assert!(matches!(Group::Symmetric(7).elements(), Err(AceError::NotEnumerable(_))));
    }

    #[test]
    fn group_axioms_by_enumeration() {
        for group in [Group::C4, Group::Symmetric(3), Group::Symmetric(4)] {
            let elems = group.elements().unwrap();
            let e = group.identity();
            for a in &elems {
                assert_eq!(&group.compose(&e, a).unwrap(), a);
                assert_eq!(&group.compose(a, &e).unwrap(), a);
                let inv = group.inverse(a).unwrap();
                assert_eq!(group.compose(a, &inv).unwrap(), e);
                for b in &elems {
                    assert!(elems.contains(&group.compose(a, b).unwrap()), "closure");
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            for _ in 0..50 {
                let (a, b, c) = (group.sample(&mut rng), group.sample(&mut rng), group.sample(&mut rng));
                let left = group.compose(&group.compose(&a, &b).unwrap(), &c).unwrap();
                let right = group.compose(&a, &group.compose(&b, &c).unwrap()).unwrap();
                assert_eq!(left, right, "associativity");
            }
        }
    }

    #[test]
    fn representations_are_homomorphisms() {
        let cases = [
            Representation::new(Group::C4, Space::Image { channels: 2, height: 4, width: 4 }).unwrap(),
            Representation::new(Group::C4, Space::Regular { channels: 2, height: 3, width: 3 }).unwrap(),
            Representation::new(Group::Symmetric(4), Space::Set { n: 4, d: 2 }).unwrap(),
        ];
        for rep in cases {
            let z = ramp(&rep.space.shape());
            let elems = rep.group.elements().unwrap();
            for a in &elems {
                for b in &elems {
                    let ab = rep.group.compose(a, b).unwrap();
                    let direct = rep.apply(&ab, &z).unwrap();
                    let seq = rep.apply(a, &rep.apply(b, &z).unwrap()).unwrap();
                    assert_eq!(direct.to_vec(), seq.to_vec());
                }
            }
        }
    }

    #[test]
    fn regular_action_inverse_round_trip() {
        let z = ramp(&[4, 2, 3, 3]);
        for r in 0..4u8 {
            let g = GroupElement::Rotation(r);
            let back = Group::C4.inverse(&g).unwrap();
            let out = apply_regular(&back, &apply_regular(&g, &z).unwrap()).unwrap();
            assert_eq!(out.to_vec(), z.to_vec());
        }
        assert!(apply_regular(&GroupElement::Rotation(1), &ramp(&[3, 2, 3, 3])).is_err());
    }

    #[test]
    fn mismatched_spaces_are_rejected() {
        assert!(Representation::new(Group::C4, Space::Image { channels: 1, height: 4, width: 5 }).is_err());
        assert!(Representation::new(Group::C4, Space::Set { n: 3, d: 2 }).is_err());
        assert!(Representation::new(Group::Symmetric(3), Space::Set { n: 4, d: 2 }).is_err());
        let rep = Representation::new(Group::C4, Space::Image { channels: 1, height: 3, width: 3 }).unwrap();
        assert!(rep.apply(&GroupElement::Rotation(1), &ramp(&[1, 4, 4])).is_err());
        assert!(rep.apply(&GroupElement::Permutation(vec![0]), &ramp(&[1, 3, 3])).is_err());
    }

    #[test]
    fn sampling_c4_is_uniform() {
        // Multinomial concentration: each count within 3 sigma of n/4.
        let n = 10_000.0;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = [0usize; 4];
        for _ in 0..n as usize {
            if let GroupElement::Rotation(r) = Group::C4.sample(&mut rng) {
                counts[r as usize] += 1;
            }
        }
        let sigma = (n * 0.25 * 0.75f64).sqrt();
        for c in counts {
            assert!((c as f64 - n / 4.0).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }
}
