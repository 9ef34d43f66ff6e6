use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::map::MobiusMap;
use crate::error::{QlabError, Result};

/// Default cap on the number of enumerated words.
pub const DEFAULT_WORD_BUDGET: u128 = 5_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sphere {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// JSON description of a Schottky group.
///
/// Pairing `[i, j]` produces the generator `x ↦ c_j + (r_j/r_i) A (ι_i(x) - c_i)`,
/// where `ι_i` is the inversion in sphere `i` and `A` is `rotations[k]`
/// (identity when absent). It maps the exterior of sphere `i` onto the
/// interior of sphere `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchottkyConfig {
    pub n: usize,
    pub spheres: Vec<Sphere>,
    pub pairings: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rotations: Vec<Option<Vec<Vec<f64>>>>,
}

/// Reduced word in the generators. Letter `2k` is `g_k` and `2k + 1` its
/// inverse; the word `l_1 l_2 ... l_L` denotes `g_{l_1} ∘ ... ∘ g_{l_L}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct GroupWord {
    letters: Vec<u8>,
}

impl GroupWord {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_letters(letters: Vec<u8>) -> Result<Self> {
        if letters.windows(2).any(|w| w[0] == w[1] ^ 1) {
            return Err(QlabError::InvalidInput("word is not reduced".into()));
        }
        Ok(Self { letters })
    }

    pub fn letters(&self) -> &[u8] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }
}

impl fmt::Display for GroupWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            return write!(f, "e");
        }
        for (i, l) in self.letters.iter().enumerate() {
            if i > 0 {
                write!(f, "*")?;
            }
            write!(f, "g{}", l / 2 + 1)?;
            if l % 2 == 1 {
                write!(f, "^-1")?;
            }
        }
        Ok(())
    }
}

/// Number of reduced words of length at most `depth` in a free group of rank `rank`.
pub fn word_count(rank: usize, depth: usize) -> u128 {
    if rank == 0 {
        return 1;
    }
    let letters = 2 * rank as u128;
    let mut shell = letters;
    let mut total: u128 = 1;
    for _ in 0..depth {
        total = total.saturating_add(shell);
        shell = shell.saturating_mul(letters - 1);
    }
    total
}

/// Result of pulling a point back to the fundamental domain.
#[derive(Debug, Clone, PartialEq)]
pub struct TileHit {
    /// `γ` with `y = γ(base)`.
    pub word: GroupWord,
    pub base: Vec<f64>,
    /// `ln |γ'_{S^n}(base)|`.
    pub log_sphere_derivative: f64,
}

/// A Schottky group: `2g` disjoint balls paired by `g` loxodromic generators.
#[derive(Debug, Clone)]
pub struct SchottkyGroup {
    n: usize,
    spheres: Vec<Sphere>,
    /// Indexed by letter.
    letters: Vec<MobiusMap>,
    /// Ball each letter maps the fundamental domain into.
    target: Vec<usize>,
    /// Letter whose target is a given ball.
    into_ball: Vec<u8>,
    budget: u128,
}

impl SchottkyGroup {
    pub fn new(config: &SchottkyConfig) -> Result<Self> {
        let n = config.n;
        if n < 2 {
            return Err(QlabError::InvalidInput("Schottky groups need n >= 2".into()));
        }
        for s in &config.spheres {
            if s.center.len() != n {
                return Err(QlabError::DimensionMismatch { expected: n, found: s.center.len() });
            }
            if !(s.radius > 0.0 && s.radius.is_finite()) {
                return Err(QlabError::NonpositiveScale(s.radius));
            }
        }
        for (i, a) in config.spheres.iter().enumerate() {
            for b in &config.spheres[i + 1..] {
                let d: f64 =
                    a.center.iter().zip(&b.center).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                if d <= a.radius + b.radius {
                    return Err(QlabError::InvalidInput(
                        "pairing spheres must be pairwise disjoint".into(),
                    ));
                }
            }
        }
        let m = config.spheres.len();
        let mut used = vec![false; m];
        for &[i, j] in &config.pairings {
            if i >= m || j >= m || i == j || used[i] || used[j] {
                return Err(QlabError::InvalidInput(format!("invalid pairing [{i}, {j}]")));
            }
            used[i] = true;
            used[j] = true;
        }
        if used.iter().any(|u| !u) {
            return Err(QlabError::InvalidInput("every sphere must be paired exactly once".into()));
        }
        if !config.rotations.is_empty() && config.rotations.len() != config.pairings.len() {
            return Err(QlabError::InvalidInput("one rotation entry per pairing".into()));
        }

        let mut letters = Vec::new();
        let mut target = Vec::new();
        let mut into_ball = vec![0u8; m];
        for (k, &[i, j]) in config.pairings.iter().enumerate() {
            let (si, sj) = (&config.spheres[i], &config.spheres[j]);
            let orth = match config.rotations.get(k) {
                Some(Some(rows)) => {
                    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                        return Err(QlabError::InvalidInput("rotation must be n x n".into()));
                    }
                    Some(rows.concat())
                }
                _ => None,
            };
            let scale = sj.radius / si.radius;
            // x ↦ c_j + scale·A(x - c_i)
            let moved = match &orth {
                Some(a) => (0..n)
                    .map(|r| (0..n).map(|c| a[r * n + c] * si.center[c]).sum::<f64>())
                    .collect::<Vec<_>>(),
                None => si.center.clone(),
            };
            let shift = sj.center.iter().zip(&moved).map(|(c, m)| c - scale * m).collect();
            let sim = MobiusMap::similarity(orth, scale, shift)?;
            let g = sim.compose(&MobiusMap::inversion(si.center.clone(), si.radius)?);
            into_ball[j] = letters.len() as u8;
            target.push(j);
            into_ball[i] = letters.len() as u8 + 1;
            target.push(i);
            letters.push(g.clone());
            letters.push(g.inverse());
        }
        let group = Self {
            n,
            spheres: config.spheres.clone(),
            letters,
            target,
            into_ball,
            budget: DEFAULT_WORD_BUDGET,
        };
        group.verify_pairings()?;
        Ok(group)
    }

    /// Sampled check that each letter maps points just outside its source
    /// sphere into its target ball.
    fn verify_pairings(&self) -> Result<()> {
        for (l, g) in self.letters.iter().enumerate() {
            let src = &self.spheres[self.target[l ^ 1]];
            let dst = &self.spheres[self.target[l]];
            for axis in 0..self.n {
                for sign in [-1.0, 1.0] {
                    let mut x = src.center.clone();
                    x[axis] += sign * src.radius * 1.01;
                    let y = g.apply(&x)?;
                    if dist(&y, &dst.center) >= dst.radius {
                        return Err(QlabError::InvalidInput(format!(
                            "generator letter {l} does not map into its partner ball"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn with_word_budget(mut self, budget: u128) -> Self {
        self.budget = budget;
        self
    }

    pub fn word_budget(&self) -> u128 {
        self.budget
    }

    /// Group with no generators.
    pub fn trivial(n: usize) -> Self {
        Self {
            n,
            spheres: Vec::new(),
            letters: Vec::new(),
            target: Vec::new(),
            into_ball: Vec::new(),
            budget: DEFAULT_WORD_BUDGET,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.letters.len() / 2
    }

    pub fn spheres(&self) -> &[Sphere] {
        &self.spheres
    }

    pub fn letter(&self, l: u8) -> &MobiusMap {
        &self.letters[l as usize]
    }

    /// Index of the ball the letter maps the fundamental domain into.
    pub fn target_ball(&self, l: u8) -> usize {
        self.target[l as usize]
    }

    pub fn word_map(&self, word: &GroupWord) -> MobiusMap {
        word.letters.iter().fold(MobiusMap::identity(self.n), |acc, &l| {
            acc.compose(self.letter(l))
        })
    }

    /// Membership in the closed fundamental domain (outside all open balls).
    pub fn in_fundamental_domain(&self, y: &[f64]) -> bool {
        self.spheres.iter().all(|s| dist(y, &s.center) >= s.radius)
    }

    /// A deterministic point of the fundamental domain: the origin when it is
    /// outside every ball, otherwise a point beyond all of them on the first axis.
    pub fn base_point(&self) -> Vec<f64> {
        let origin = vec![0.0; self.n];
        let clear = self.spheres.iter().all(|s| dist(&origin, &s.center) > 1.5 * s.radius);
        if clear {
            return origin;
        }
        let reach = self
            .spheres
            .iter()
            .map(|s| s.center.iter().map(|c| c * c).sum::<f64>().sqrt() + s.radius)
            .fold(0.0, f64::max);
        let mut x = origin;
        x[0] = reach + 1.0;
        x
    }

    fn check_budget(&self, depth: usize) -> Result<()> {
        let words = word_count(self.rank(), depth);
        if words > self.budget {
            return Err(QlabError::DepthOverflow { words, budget: self.budget });
        }
        Ok(())
    }

    /// All reduced words of length `<= depth` with their maps, ordered by
    /// length and then lexicographically.
    pub fn enumerate_words(&self, depth: usize) -> Result<Vec<(GroupWord, MobiusMap)>> {
        self.check_budget(depth)?;
        let mut out = vec![(GroupWord::identity(), MobiusMap::identity(self.n))];
        let mut start = 0;
        for _ in 0..depth {
            let end = out.len();
            for idx in start..end {
                for l in 0..self.letters.len() as u8 {
                    let (w, g) = &out[idx];
                    if w.letters.last().is_some_and(|&last| last == l ^ 1) {
                        continue;
                    }
                    let mut letters = w.letters.clone();
                    letters.push(l);
                    let map = g.compose(&self.letters[l as usize]);
                    out.push((GroupWord { letters }, map));
                }
            }
            start = end;
        }
        Ok(out)
    }

    /// `ln |γ'_{S^n}(x)|` for every reduced word of length `1..=depth`,
    /// grouped by length (index 0 holds the identity).
    pub fn shell_log_derivatives(&self, x: &[f64], depth: usize) -> Result<Vec<Vec<f64>>> {
        if x.len() != self.n {
            return Err(QlabError::DimensionMismatch { expected: self.n, found: x.len() });
        }
        self.check_budget(depth)?;
        let base = x.iter().map(|v| v * v).sum::<f64>().ln_1p();
        let branches: Vec<Result<Vec<Vec<f64>>>> = (0..self.letters.len() as u8)
            .into_par_iter()
            .map(|l| {
                let mut shells = vec![Vec::new(); depth + 1];
                if depth > 0 {
                    self.dfs(x.to_vec(), 0.0, l, 1, depth, base, &mut shells)?;
                }
                Ok(shells)
            })
            .collect();
        let mut shells = vec![Vec::new(); depth + 1];
        shells[0].push(0.0);
        for b in branches {
            for (k, s) in b?.into_iter().enumerate() {
                shells[k].extend(s);
            }
        }
        Ok(shells)
    }

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        &self,
        mut y: Vec<f64>,
        log_d: f64,
        letter: u8,
        len: usize,
        depth: usize,
        base: f64,
        shells: &mut [Vec<f64>],
    ) -> Result<()> {
        let log_d = log_d + self.letters[letter as usize].apply_in_place(&mut y)?;
        let ny = y.iter().map(|v| v * v).sum::<f64>().ln_1p();
        shells[len].push(log_d + base - ny);
        if len < depth {
            for l in 0..self.letters.len() as u8 {
                if l != letter ^ 1 {
                    self.dfs(y.clone(), log_d, l, len + 1, depth, base, shells)?;
                }
            }
        }
        Ok(())
    }

    /// Finds `γ` with `|γ| <= max_depth` and `base ∈ F` such that `y = γ(base)`.
    pub fn locate(&self, y: &[f64], max_depth: usize) -> Result<TileHit> {
        if y.len() != self.n {
            return Err(QlabError::DimensionMismatch { expected: self.n, found: y.len() });
        }
        let mut cur = y.to_vec();
        let mut letters = Vec::new();
        let mut log_inv = 0.0;
        loop {
            let ball = self.spheres.iter().position(|s| dist(&cur, &s.center) < s.radius);
            let Some(ball) = ball else {
                return Ok(TileHit {
                    word: GroupWord { letters },
                    base: cur,
                    log_sphere_derivative: -log_inv,
                });
            };
            if letters.len() == max_depth {
                return Err(QlabError::PointNotInTile { depth: max_depth });
            }
            let l = self.into_ball[ball];
            let before = cur.clone();
            let log_d = self.letters[(l ^ 1) as usize].apply_in_place(&mut cur)?;
            log_inv += log_d + super::map::sphere_correction(&before, &cur);
            letters.push(l);
        }
    }

    /// Balls `γ(B)` over words of length exactly `depth`; their union covers
    /// the limit set.
    pub fn limit_set_cover(&self, depth: usize) -> Result<Vec<Sphere>> {
        if depth == 0 || self.letters.is_empty() {
            return Ok(self.spheres.clone());
        }
        let words = self.enumerate_words(depth - 1)?;
        let mut out = Vec::new();
        for (w, g) in words.iter().filter(|(w, _)| w.len() == depth - 1) {
            for l in 0..self.letters.len() as u8 {
                if w.letters.last().is_some_and(|&last| last == l ^ 1) {
                    continue;
                }
                let s = &self.spheres[self.target[l as usize]];
                let (center, radius) = g.image_ball(&s.center, s.radius)?;
                out.push(Sphere { center, radius });
            }
        }
        Ok(out)
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn two_generator(n: usize, r: f64) -> SchottkyGroup {
        let mut spheres = Vec::new();
        for (axis, sign) in [(0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0)] {
            let mut c = vec![0.0; n];
            c[axis] = 2.0 * sign;
            spheres.push(Sphere { center: c, radius: r });
        }
        SchottkyGroup::new(&SchottkyConfig {
            n,
            spheres,
            pairings: vec![[0, 1], [2, 3]],
            rotations: vec![],
        })
        .unwrap()
    }

    #[test]
    fn word_counts() {
        assert_eq!(word_count(2, 1), 5);
        assert_eq!(word_count(2, 2), 17);
        assert_eq!(word_count(0, 5), 1);
        let g = two_generator(3, 0.5);
        assert_eq!(g.enumerate_words(3).unwrap().len() as u128, word_count(2, 3));
    }

    #[test]
    fn generators_pair_spheres() {
        let g = two_generator(3, 0.5);
        let x = [2.6, 0.0, 0.0];
        let y = g.letter(0).apply(&x).unwrap();
        assert!(dist(&y, &[-2.0, 0.0, 0.0]) < 0.5);
    }

    #[test]
    fn rejects_bad_configs() {
        let base = SchottkyConfig {
            n: 2,
            spheres: vec![
                Sphere { center: vec![0.0, 0.0], radius: 1.0 },
                Sphere { center: vec![1.5, 0.0], radius: 1.0 },
            ],
            pairings: vec![[0, 1]],
            rotations: vec![],
        };
        assert!(SchottkyGroup::new(&base).is_err());
        let mut unpaired = base.clone();
        unpaired.spheres[1].center = vec![5.0, 0.0];
        unpaired.pairings.clear();
        assert!(SchottkyGroup::new(&unpaired).is_err());
    }

    #[test]
    fn locate_inverts_word_action() {
        let g = two_generator(3, 0.5);
        let x = vec![0.3, 0.2, 0.1];
        let w = GroupWord::from_letters(vec![0, 2, 0]).unwrap();
        let y = g.word_map(&w).apply(&x).unwrap();
        let hit = g.locate(&y, 5).unwrap();
        assert_eq!(hit.word, w);
        assert!(dist(&hit.base, &x) < 1e-9);
        let expect = g.word_map(&w).log_sphere_derivative(&x).unwrap();
        assert!((hit.log_sphere_derivative - expect).abs() < 1e-9);
        assert!(matches!(g.locate(&y, 2), Err(QlabError::PointNotInTile { depth: 2 })));
    }

    #[test]
    fn budget_guard() {
        let g = two_generator(3, 0.5).with_word_budget(10);
        assert!(matches!(g.enumerate_words(2), Err(QlabError::DepthOverflow { .. })));
    }

    #[test]
    fn word_display() {
        let w = GroupWord::from_letters(vec![0, 3]).unwrap();
        assert_eq!(w.to_string(), "g1*g2^-1");
        assert!(GroupWord::from_letters(vec![2, 3]).is_err());
    }
}
