//! Words, cyclic words and automorphisms of a free group of finite rank.
//!
//! Letters are packed as `2 * index + inverse`, so the natural integer
//! order is the generator order `a < A < b < B < ...` used for canonical
//! rotations. The same encoding doubles as oriented edges of a graph, with
//! the rose identifying edge paths and words letter for letter.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A signed generator, or equally an oriented edge.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Letter(u32);

pub type Generator = Letter;

impl Letter {
    pub fn new(index: usize, inverse: bool) -> Self {
        Letter(((index as u32) << 1) | inverse as u32)
    }

    pub fn positive(index: usize) -> Self {
        Self::new(index, false)
    }

    pub fn negative(index: usize) -> Self {
        Self::new(index, true)
    }

    pub fn from_code(code: usize) -> Self {
        Letter(code as u32)
    }

    /// Dense code in `0..2 * rank`.
    #[inline]
    pub fn code(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn index(self) -> usize {
        (self.0 >> 1) as usize
    }

    #[inline]
    pub fn is_inverse(self) -> bool {
        self.0 & 1 == 1
    }

    pub fn sign(self) -> i8 {
        if self.is_inverse() {
            -1
        } else {
            1
        }
    }

    #[inline]
    pub fn inverse(self) -> Self {
        Letter(self.0 ^ 1)
    }

    /// `a`..`z` for the first 26 generators, uppercase for inverses.
    pub fn ascii(self) -> String {
        let i = self.index();
        let base = if i < 26 {
            ((b'a' + i as u8) as char).to_string()
        } else {
            format!("x{i}")
        };
        if self.is_inverse() {
            base.to_uppercase()
        } else {
            base
        }
    }
}

impl fmt::Debug for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.ascii())
    }
}

/// Appends `letter` to a reduced stack, cancelling against its top.
#[inline]
pub fn push_reduced(stack: &mut Vec<Letter>, letter: Letter) {
    if stack.last() == Some(&letter.inverse()) {
        stack.pop();
    } else {
        stack.push(letter);
    }
}

pub fn reduce_letters(letters: &[Letter]) -> Vec<Letter> {
    let mut out = Vec::with_capacity(letters.len());
    for &l in letters {
        push_reduced(&mut out, l);
    }
    out
}

pub fn is_reduced_letters(letters: &[Letter]) -> bool {
    letters.windows(2).all(|w| w[0] != w[1].inverse())
}

pub fn inverse_letters(letters: &[Letter]) -> Vec<Letter> {
    letters.iter().rev().map(|l| l.inverse()).collect()
}

/// Start of the lexicographically least rotation.
pub fn least_rotation<T: Ord>(s: &[T]) -> usize {
    let n = s.len();
    if n == 0 {
        return 0;
    }
    let (mut i, mut j, mut k) = (0usize, 1usize, 0usize);
    while i < n && j < n && k < n {
        let a = &s[(i + k) % n];
        let b = &s[(j + k) % n];
        if a == b {
            k += 1;
            continue;
        }
        if a > b {
            i += k + 1;
        } else {
            j += k + 1;
        }
        if i == j {
            j += 1;
        }
        k = 0;
    }
    i.min(j)
}

/// Finite sequence of signed generators.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Word {
    letters: Vec<Letter>,
    reduced: bool,
}

impl Word {
    pub fn empty() -> Self {
        Word {
            letters: Vec::new(),
            reduced: true,
        }
    }

    /// Wraps letters as given, without reducing.
    pub fn from_letters(letters: Vec<Letter>) -> Self {
        let reduced = is_reduced_letters(&letters);
        Word { letters, reduced }
    }

    /// Freely reduces `letters`.
    pub fn reduced(letters: &[Letter]) -> Self {
        Word {
            letters: reduce_letters(letters),
            reduced: true,
        }
    }

    /// Parses compact ASCII such as `"abAB"`: lowercase generators,
    /// uppercase inverses. Whitespace is ignored. Does not reduce.
    pub fn parse_compact(s: &str) -> Result<Self> {
        let mut letters = Vec::new();
        for (col, ch) in s.chars().enumerate() {
            if ch.is_whitespace() {
                continue;
            }
            if !ch.is_ascii_alphabetic() {
                return Err(Error::Parse {
                    line: 1,
                    column: col + 1,
                    message: format!("unexpected character {ch:?}"),
                });
            }
            let idx = (ch.to_ascii_lowercase() as u8 - b'a') as usize;
            letters.push(Letter::new(idx, ch.is_ascii_uppercase()));
        }
        Ok(Word::from_letters(letters))
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn into_letters(self) -> Vec<Letter> {
        self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn is_reduced(&self) -> bool {
        self.reduced
    }

    pub fn reduce(&self) -> Word {
        if self.reduced {
            return self.clone();
        }
        Word::reduced(&self.letters)
    }

    pub fn inverse(&self) -> Word {
        Word {
            letters: inverse_letters(&self.letters),
            reduced: self.reduced,
        }
    }

    /// Reduced product `self · other`.
    pub fn mul(&self, other: &Word) -> Word {
        let mut stack = reduce_letters(&self.letters);
        for &l in other.reduce().letters() {
            push_reduced(&mut stack, l);
        }
        Word {
            letters: stack,
            reduced: true,
        }
    }

    /// Largest generator index plus one.
    pub fn min_rank(&self) -> usize {
        self.letters.iter().map(|l| l.index() + 1).max().unwrap_or(0)
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Word(")?;
        for l in &self.letters {
            write!(f, "{}", l.ascii())?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            return write!(f, "1");
        }
        for l in &self.letters {
            write!(f, "{}", l.ascii())?;
        }
        Ok(())
    }
}

pub fn reduce(w: &Word) -> Word {
    w.reduce()
}

/// Nonempty cyclically reduced sequence stored as its least rotation.
///
/// Also used for circuits in a graph: the letters are then oriented edges.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CyclicWord {
    letters: Vec<Letter>,
}

impl CyclicWord {
    /// Fails with `TrivialWord` on empty input or when `letters` is not
    /// cyclically reduced.
    pub fn new(letters: &[Letter]) -> Result<Self> {
        if letters.is_empty() || !is_cyclically_reduced(letters) {
            return Err(Error::TrivialWord);
        }
        let start = least_rotation(letters);
        let mut canon = Vec::with_capacity(letters.len());
        canon.extend_from_slice(&letters[start..]);
        canon.extend_from_slice(&letters[..start]);
        Ok(CyclicWord { letters: canon })
    }

    /// Conjugacy class of an arbitrary word.
    pub fn from_word(w: &Word) -> Result<Self> {
        Ok(cyclic_reduce(w)?.cyclic)
    }

    pub fn parse_compact(s: &str) -> Result<Self> {
        Self::from_word(&Word::parse_compact(s)?)
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_word(&self) -> Word {
        Word {
            letters: self.letters.clone(),
            reduced: true,
        }
    }

    pub fn inverse(&self) -> CyclicWord {
        CyclicWord::new(&inverse_letters(&self.letters)).expect("inverse of a circuit is a circuit")
    }

    /// All rotations, starting with the canonical one.
    pub fn rotations(&self) -> impl Iterator<Item = Vec<Letter>> + '_ {
        let n = self.letters.len();
        (0..n).map(move |i| {
            let mut r = self.letters[i..].to_vec();
            r.extend_from_slice(&self.letters[..i]);
            r
        })
    }

    /// Lesser of the class and its inverse; identifies `w` with `w⁻¹`.
    pub fn unoriented(&self) -> CyclicWord {
        let inv = self.inverse();
        if inv.letters < self.letters {
            inv
        } else {
            self.clone()
        }
    }
}

impl fmt::Debug for CyclicWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Cyclic(")?;
        for l in &self.letters {
            write!(f, "{}", l.ascii())?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for CyclicWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.letters {
            write!(f, "{}", l.ascii())?;
        }
        Ok(())
    }
}

pub fn is_cyclically_reduced(letters: &[Letter]) -> bool {
    is_reduced_letters(letters)
        && match (letters.first(), letters.last()) {
            (Some(&f), Some(&l)) => letters.len() == 1 || f != l.inverse(),
            _ => true,
        }
}

/// Result of [`cyclic_reduce`]: `word = conjugator · core · conjugator⁻¹`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CyclicReduction {
    pub cyclic: CyclicWord,
    pub core: Word,
    pub conjugator: Word,
}

pub fn cyclic_reduce(w: &Word) -> Result<CyclicReduction> {
    let r = reduce_letters(w.letters());
    if r.is_empty() {
        return Err(Error::TrivialWord);
    }
    let n = r.len();
    let mut k = 0;
    while 2 * k + 1 < n && r[k] == r[n - 1 - k].inverse() {
        k += 1;
    }
    let core = r[k..n - k].to_vec();
    Ok(CyclicReduction {
        cyclic: CyclicWord::new(&core)?,
        core: Word {
            letters: core,
            reduced: true,
        },
        conjugator: Word {
            letters: r[..k].to_vec(),
            reduced: true,
        },
    })
}

/// Cyclically reduces a letter sequence in place of a full [`CyclicReduction`].
pub fn cyclic_core(letters: &[Letter]) -> Vec<Letter> {
    let r = reduce_letters(letters);
    let n = r.len();
    let mut k = 0;
    while 2 * k + 1 < n && r[k] == r[n - 1 - k].inverse() {
        k += 1;
    }
    r[k..n - k].to_vec()
}

pub fn conjugacy_equal(u: &CyclicWord, v: &CyclicWord, oriented: bool) -> bool {
    if u == v {
        return true;
    }
    !oriented && u.len() == v.len() && &u.inverse() == v
}

/// An automorphism given by generator images, optionally with its inverse.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Automorphism {
    images: Vec<Word>,
    inverse_images: Option<Vec<Word>>,
}

impl fmt::Debug for Automorphism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let imgs: Vec<String> = self
            .images
            .iter()
            .enumerate()
            .map(|(i, w)| format!("{}->{}", Letter::positive(i).ascii(), w))
            .collect();
        write!(f, "Automorphism[{}]", imgs.join(", "))
    }
}

impl Automorphism {
    /// Images must be nontrivial reduced words in generators `< images.len()`.
    pub fn new(images: Vec<Word>) -> Result<Self> {
        let rank = images.len();
        if rank == 0 {
            return Err(Error::InvalidArgument("rank must be positive".into()));
        }
        for (i, w) in images.iter().enumerate() {
            if w.is_empty() || !w.is_reduced() {
                return Err(Error::BadImage(i));
            }
            if let Some(l) = w.letters().iter().find(|l| l.index() >= rank) {
                return Err(Error::GeneratorOutOfRange { index: l.index(), rank });
            }
        }
        Ok(Automorphism {
            images,
            inverse_images: None,
        })
    }

    /// Attaches an inverse, checking that both composites fix every generator.
    pub fn with_inverse(mut self, inverse_images: Vec<Word>) -> Result<Self> {
        let inv = Automorphism::new(inverse_images)?;
        if inv.rank() != self.rank() {
            return Err(Error::RankMismatch {
                left: self.rank(),
                right: inv.rank(),
            });
        }
        for i in 0..self.rank() {
            let g = Word::from_letters(vec![Letter::positive(i)]);
            if self.apply(&inv.apply(&g)) != g || inv.apply(&self.apply(&g)) != g {
                return Err(Error::InvalidInverse(i));
            }
        }
        self.inverse_images = Some(inv.images);
        Ok(self)
    }

    pub fn identity(rank: usize) -> Self {
        let images: Vec<Word> = (0..rank)
            .map(|i| Word::from_letters(vec![Letter::positive(i)]))
            .collect();
        Automorphism {
            inverse_images: Some(images.clone()),
            images,
        }
    }

    /// Relabels generators: `a_i -> a_{perm[i]}`.
    pub fn permutation(perm: &[usize]) -> Result<Self> {
        let rank = perm.len();
        let mut inv = vec![usize::MAX; rank];
        for (i, &p) in perm.iter().enumerate() {
            if p >= rank || inv[p] != usize::MAX {
                return Err(Error::InvalidArgument("not a permutation".into()));
            }
            inv[p] = i;
        }
        let w = |j: usize| Word::from_letters(vec![Letter::positive(j)]);
        Automorphism::new(perm.iter().map(|&p| w(p)).collect())?.with_inverse(inv.iter().map(|&p| w(p)).collect())
    }

    pub fn rank(&self) -> usize {
        self.images.len()
    }

    pub fn images(&self) -> &[Word] {
        &self.images
    }

    pub fn image(&self, g: Letter) -> Word {
        let w = &self.images[g.index()];
        if g.is_inverse() {
            w.inverse()
        } else {
            w.clone()
        }
    }

    pub fn has_inverse(&self) -> bool {
        self.inverse_images.is_some()
    }

    pub fn inverse(&self) -> Option<Automorphism> {
        self.inverse_images.as_ref().map(|inv| Automorphism {
            images: inv.clone(),
            inverse_images: Some(self.images.clone()),
        })
    }

    /// Appends the image of `letters` to the reduced stack `out`.
    pub fn apply_into(&self, letters: &[Letter], out: &mut Vec<Letter>) {
        for &g in letters {
            let img = self.images[g.index()].letters();
            if g.is_inverse() {
                for &l in img.iter().rev() {
                    push_reduced(out, l.inverse());
                }
            } else {
                for &l in img {
                    push_reduced(out, l);
                }
            }
        }
    }

    pub fn apply(&self, w: &Word) -> Word {
        let mut out = Vec::with_capacity(w.len() * 2);
        self.apply_into(w.letters(), &mut out);
        Word {
            letters: out,
            reduced: true,
        }
    }

    pub fn apply_cyclic(&self, c: &CyclicWord) -> Result<CyclicWord> {
        let mut out = Vec::with_capacity(c.len() * 2);
        self.apply_into(c.letters(), &mut out);
        CyclicWord::new(&cyclic_core(&out)).map_err(|_| Error::TrivialImage)
    }

    pub fn power(&self, n: usize) -> Automorphism {
        let mut acc = Automorphism::identity(self.rank());
        for _ in 0..n {
            acc = compose(self, &acc).expect("same rank");
        }
        acc
    }
}

pub fn apply(phi: &Automorphism, w: &Word) -> Word {
    phi.apply(w)
}

/// `phi ∘ psi`, i.e. apply `psi` first.
pub fn compose(phi: &Automorphism, psi: &Automorphism) -> Result<Automorphism> {
    if phi.rank() != psi.rank() {
        return Err(Error::RankMismatch {
            left: phi.rank(),
            right: psi.rank(),
        });
    }
    let images = psi.images.iter().map(|w| phi.apply(w)).collect();
    let inverse_images = match (&phi.inverse_images, &psi.inverse_images) {
        (Some(pi), Some(si)) => {
            let pinv = Automorphism {
                images: pi.clone(),
                inverse_images: None,
            };
            let sinv = Automorphism {
                images: si.clone(),
                inverse_images: None,
            };
            Some(pinv.images.iter().map(|w| sinv.apply(w)).collect())
        }
        _ => None,
    };
    Ok(Automorphism { images, inverse_images })
}

/// `phi^n (w)` with reduction after every step.
pub fn power_apply(phi: &Automorphism, w: &Word, n: usize) -> Word {
    let mut cur = w.reduce();
    for _ in 0..n {
        cur = phi.apply(&cur);
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Word {
        Word::parse_compact(s).unwrap()
    }

    fn aut(imgs: &[&str]) -> Automorphism {
        Automorphism::new(imgs.iter().map(|s| w(s)).collect()).unwrap()
    }

    fn fib() -> Automorphism {
        aut(&["ab", "a"]).with_inverse(vec![w("b"), w("Ba")]).unwrap()
    }

    #[test]
    fn reduce_examples() {
        assert_eq!(w("abBa").reduce(), w("aa"));
        assert_eq!(w("").reduce(), Word::empty());
        assert_eq!(w("aAaA").reduce(), Word::empty());
        assert!(w("aAaA").reduce().is_reduced());
    }

    #[test]
    fn cyclic_reduce_examples() {
        let r = cyclic_reduce(&w("Bab")).unwrap();
        assert_eq!(r.core, w("a"));
        assert_eq!(r.conjugator, w("B"));

        let r = cyclic_reduce(&w("ab")).unwrap();
        assert_eq!(r.core, w("ab"));
        assert!(r.conjugator.is_empty());

        let r = cyclic_reduce(&w("Abaa")).unwrap();
        assert_eq!(r.core, w("ba"));
        assert_eq!(r.conjugator, w("A"));
        assert_eq!(r.cyclic.letters(), w("ab").letters());
        let back = r.conjugator.mul(&r.core).mul(&r.conjugator.inverse());
        assert_eq!(back, w("Abaa"));

        assert_eq!(cyclic_reduce(&w("aA")), Err(Error::TrivialWord));
    }

    #[test]
    fn apply_examples() {
        let phi = aut(&["ab", "a"]);
        assert_eq!(phi.apply(&w("ba")), w("aab"));
        assert_eq!(phi.apply(&w("aB")), w("abA"));
        let id = Automorphism::identity(3);
        assert_eq!(id.apply(&w("abCa")), w("abCa"));
    }

    #[test]
    fn compose_examples() {
        let phi = fib();
        let sq = compose(&phi, &phi).unwrap();
        assert_eq!(sq.images(), &[w("aba"), w("ab")]);
        assert_eq!(
            compose(&phi, &Automorphism::identity(2)).unwrap().images(),
            phi.images()
        );
        let id = compose(&phi, &phi.inverse().unwrap()).unwrap();
        assert_eq!(id.images(), Automorphism::identity(2).images());
        assert!(matches!(
            compose(&phi, &Automorphism::identity(3)),
            Err(Error::RankMismatch { .. })
        ));
    }

    #[test]
    fn power_apply_examples() {
        let phi = fib();
        assert_eq!(power_apply(&phi, &w("ab"), 0), w("ab"));
        // a, ab, aba, abaab, abaababa, ... lengths run through Fibonacci numbers
        let x = power_apply(&phi, &w("a"), 4);
        assert_eq!(x, w("abaababa"));
        assert_eq!(power_apply(&phi, &w("a"), 5).len(), 13);
        let inv = phi.inverse().unwrap();
        let u = w("abBAbbaB").reduce();
        assert_eq!(power_apply(&phi, &power_apply(&inv, &u, 4), 4), u);
    }

    #[test]
    fn conjugacy_examples() {
        let c = |s: &str| CyclicWord::parse_compact(s).unwrap();
        assert!(conjugacy_equal(&c("ab"), &c("ba"), true));
        assert!(!conjugacy_equal(&c("ab"), &c("BA"), true));
        assert!(conjugacy_equal(&c("ab"), &c("BA"), false));
        assert!(!conjugacy_equal(&c("abab"), &c("ab"), true));
        assert!(!conjugacy_equal(&c("abab"), &c("ab"), false));
    }

    #[test]
    fn canonical_rotation_uses_generator_order() {
        // a < A < b < B
        let c = CyclicWord::parse_compact("Ba").unwrap();
        assert_eq!(c.to_string(), "aB");
        let c = CyclicWord::parse_compact("bA").unwrap();
        assert_eq!(c.to_string(), "Ab");
    }

    #[test]
    fn rejects_bad_inverse() {
        let phi = aut(&["ab", "a"]);
        assert_eq!(phi.with_inverse(vec![w("a"), w("b")]), Err(Error::InvalidInverse(0)));
    }

    #[test]
    fn permutation_automorphism() {
        let p = Automorphism::permutation(&[1, 0, 2]).unwrap();
        assert_eq!(p.apply(&w("abc")), w("bac"));
        assert!(p.has_inverse());
    }
}
