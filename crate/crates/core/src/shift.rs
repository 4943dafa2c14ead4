//! Subshifts of finite type, admissible words and cylinder functions.
//!
//! A point of `X(A)` is a one-sided sequence `x1 x2 x3 ...` with
//! `A(x_i, x_{i+1}) = 1`; the shift `r` drops the first symbol. A cylinder
//! function of depth `d` is constant on the cylinders `[w]` of length-`d`
//! words and is stored as one value per admissible word, in lexicographic
//! order.
//!
//! Symbols are 1-based in every external representation (`Word` display and
//! parsing, `preimage_symbols`, error messages) and 0-based codes internally.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Transition data `A` of a subshift of finite type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subshift {
    k: usize,
    matrix: Vec<bool>,
    column_sums: Vec<usize>,
    irreducible: bool,
}

impl Subshift {
    /// Validates a 0/1 matrix. Every column needs a nonzero entry so that
    /// every point has at least one preimage under the shift.
    pub fn new(rows: &[Vec<u8>]) -> Result<Arc<Self>> {
        let as_f64: Vec<Vec<f64>> = rows
            .iter()
            .map(|row| row.iter().map(|&v| f64::from(v)).collect())
            .collect();
        Self::from_f64_rows(&as_f64)
    }

    pub fn from_f64_rows(rows: &[Vec<f64>]) -> Result<Arc<Self>> {
        let k = rows.len();
        if k == 0 {
            return Err(Error::EmptyAlphabet);
        }
        if k > usize::from(u8::MAX) {
            return Err(Error::AlphabetTooLarge(k));
        }
        let mut matrix = Vec::with_capacity(k * k);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::NotSquare {
                    row: i + 1,
                    len: row.len(),
                    k,
                });
            }
            for (j, &value) in row.iter().enumerate() {
                if value == 0.0 {
                    matrix.push(false);
                } else if value == 1.0 {
                    matrix.push(true);
                } else {
                    return Err(Error::NonBinaryEntry {
                        row: i + 1,
                        col: j + 1,
                        value,
                    });
                }
            }
        }
        let column_sums: Vec<usize> = (0..k)
            .map(|j| (0..k).filter(|&i| matrix[i * k + j]).count())
            .collect();
        if let Some(j) = column_sums.iter().position(|&c| c == 0) {
            return Err(Error::ZeroColumn(j + 1));
        }
        let irreducible = strongly_connected(k, &matrix);
        Ok(Arc::new(Subshift {
            k,
            matrix,
            column_sums,
            irreducible,
        }))
    }

    /// Full shift on `k` symbols.
    pub fn full(k: usize) -> Arc<Self> {
        Self::new(&vec![vec![1; k]; k]).expect("full shift is valid")
    }

    /// `A = [[1,1],[1,0]]`.
    pub fn golden_mean() -> Arc<Self> {
        Self::new(&[vec![1, 1], vec![1, 0]]).expect("golden mean shift is valid")
    }

    pub fn alphabet_size(&self) -> usize {
        self.k
    }

    /// `A(a, b)` for 0-based codes.
    #[inline]
    pub fn allowed(&self, a: u8, b: u8) -> bool {
        self.matrix[usize::from(a) * self.k + usize::from(b)]
    }

    /// Column sums `c(j) = #{a : A(a,j) = 1}`, indexed by 0-based code.
    pub fn column_sums(&self) -> &[usize] {
        &self.column_sums
    }

    #[inline]
    pub(crate) fn column_sum(&self, j: u8) -> usize {
        self.column_sums[usize::from(j)]
    }

    /// True when the transition graph is strongly connected.
    pub fn is_irreducible(&self) -> bool {
        self.irreducible
    }

    pub fn matrix_rows(&self) -> Vec<Vec<u8>> {
        (0..self.k)
            .map(|i| {
                (0..self.k)
                    .map(|j| u8::from(self.matrix[i * self.k + j]))
                    .collect()
            })
            .collect()
    }

    /// First symbols of the preimages of any point starting with `j`
    /// (1-based in and out).
    pub fn preimage_symbols(&self, j: usize) -> Result<Vec<usize>> {
        if j == 0 || j > self.k {
            return Err(Error::InvalidSymbol {
                symbol: j,
                k: self.k,
            });
        }
        Ok(self
            .preimages(code(j - 1))
            .map(|a| usize::from(a) + 1)
            .collect())
    }

    /// 0-based codes `a` with `A(a, j) = 1`.
    pub(crate) fn preimages(&self, j: u8) -> impl Iterator<Item = u8> + '_ {
        (0..self.k)
            .map(code)
            .filter(move |&a| self.allowed(a, j))
    }

    pub(crate) fn successors(&self, a: u8) -> impl Iterator<Item = u8> + '_ {
        (0..self.k)
            .map(code)
            .filter(move |&b| self.allowed(a, b))
    }

    pub fn is_admissible(&self, codes: &[u8]) -> bool {
        codes.iter().all(|&s| usize::from(s) < self.k)
            && codes.windows(2).all(|p| self.allowed(p[0], p[1]))
    }

    /// Admissible words of length `depth` in lexicographic order.
    pub fn admissible_words(&self, depth: usize) -> Vec<Word> {
        let mut out = Vec::new();
        self.layer(depth)
            .for_each(|_, w| out.push(Word::from_codes(w.to_vec(), self.k)));
        out
    }

    pub fn word_count(&self, depth: usize) -> usize {
        self.layer(depth).len()
    }

    pub(crate) fn layer(&self, depth: usize) -> Layer<'_> {
        Layer::new(self, depth)
    }
}

#[inline]
pub(crate) fn code(i: usize) -> u8 {
    u8::try_from(i).expect("alphabet size is bounded by 255")
}

fn strongly_connected(k: usize, matrix: &[bool]) -> bool {
    let reach = |reverse: bool| {
        let mut seen = vec![false; k];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..k {
                let edge = if reverse {
                    matrix[j * k + i]
                } else {
                    matrix[i * k + j]
                };
                if edge && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(false) && reach(true)
}

/// Index of the admissible words of one fixed length.
///
/// `counts[len][s]` is the number of admissible words of length `len` that
/// start with `s`; ranks follow from it without materializing the word list.
pub(crate) struct Layer<'a> {
    shift: &'a Subshift,
    depth: usize,
    counts: Vec<Vec<usize>>,
    len: usize,
}

impl<'a> Layer<'a> {
    fn new(shift: &'a Subshift, depth: usize) -> Self {
        assert!(depth >= 1, "depth must be positive");
        let k = shift.k;
        let mut counts = vec![vec![0usize; k]; depth + 1];
        counts[1] = vec![1; k];
        for len in 2..=depth {
            for s in 0..k {
                counts[len][s] = shift
                    .successors(code(s))
                    .map(|t| counts[len - 1][usize::from(t)])
                    .sum();
            }
        }
        let len = counts[depth].iter().sum();
        Layer {
            shift,
            depth,
            counts,
            len,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.len
    }

    /// Rank of the length-`depth` prefix of `w`; `None` if `w` is too short
    /// or the prefix is inadmissible.
    pub(crate) fn rank(&self, w: &[u8]) -> Option<usize> {
        if w.len() < self.depth {
            return None;
        }
        let mut rank = 0;
        for i in 0..self.depth {
            let s = w[i];
            if usize::from(s) >= self.shift.k {
                return None;
            }
            if i > 0 && !self.shift.allowed(w[i - 1], s) {
                return None;
            }
            let remaining = self.depth - i;
            for t in 0..s {
                if i == 0 || self.shift.allowed(w[i - 1], t) {
                    rank += self.counts[remaining][usize::from(t)];
                }
            }
        }
        Some(rank)
    }

    /// Visits every admissible word of this length in lexicographic order.
    pub(crate) fn for_each(&self, mut visit: impl FnMut(usize, &[u8])) {
        let k = self.shift.k;
        let d = self.depth;
        let mut word: Vec<u8> = Vec::with_capacity(d);
        // next candidate symbol per position
        let mut next: Vec<usize> = vec![0; d];
        let mut index = 0;
        let mut pos = 0;
        loop {
            if pos == d {
                visit(index, &word);
                index += 1;
                pos -= 1;
                word.pop();
                continue;
            }
            let mut placed = false;
            while next[pos] < k {
                let s = code(next[pos]);
                next[pos] += 1;
                if pos == 0 || self.shift.allowed(word[pos - 1], s) {
                    word.push(s);
                    pos += 1;
                    if pos < d {
                        next[pos] = 0;
                    }
                    placed = true;
                    break;
                }
            }
            if !placed {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                word.pop();
            }
        }
    }
}

/// A finite admissible word. Displayed and parsed with 1-based symbols.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word {
    codes: Vec<u8>,
    /// Alphabet larger than 9: symbols are written dot-separated.
    wide: bool,
}

impl Word {
    /// Builds a word from 1-based symbols and checks admissibility.
    pub fn new(shift: &Subshift, symbols: &[usize]) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::EmptyWord);
        }
        let mut codes = Vec::with_capacity(symbols.len());
        for &s in symbols {
            if s == 0 || s > shift.k {
                return Err(Error::InvalidSymbol {
                    symbol: s,
                    k: shift.k,
                });
            }
            codes.push(code(s - 1));
        }
        if !shift.is_admissible(&codes) {
            return Err(Error::InadmissibleWord(format_codes(&codes, shift.k)));
        }
        Ok(Word::from_codes(codes, shift.k))
    }

    /// Parses `"121"` or, for alphabets beyond 9 symbols, `"1.12.3"`.
    pub fn parse(shift: &Subshift, text: &str) -> Result<Self> {
        let text = text.trim();
        let symbols: Vec<usize> = if shift.k > 9 || text.contains('.') {
            text.split('.')
                .map(|part| {
                    part.parse::<usize>()
                        .map_err(|_| Error::Invalid(format!("bad symbol {part:?} in word {text:?}")))
                })
                .collect::<Result<_>>()?
        } else {
            text.chars()
                .map(|c| {
                    c.to_digit(10)
                        .map(|d| d as usize)
                        .ok_or_else(|| Error::Invalid(format!("bad symbol {c:?} in word {text:?}")))
                })
                .collect::<Result<_>>()?
        };
        Self::new(shift, &symbols)
    }

    pub(crate) fn from_codes(codes: Vec<u8>, k: usize) -> Self {
        Word { codes, wide: k > 9 }
    }

    /// A word over the same alphabet, for display.
    pub(crate) fn sibling(&self, codes: Vec<u8>) -> Word {
        Word {
            codes,
            wide: self.wide,
        }
    }

    /// 0-based symbol codes.
    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    /// 1-based symbols.
    pub fn symbols(&self) -> Vec<usize> {
        self.codes.iter().map(|&c| usize::from(c) + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.wide {
            f.write_str(&join_symbols(&self.codes))
        } else {
            f.write_str(&format_codes(&self.codes, 9))
        }
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{self}]")
    }
}

/// Digits for alphabets of at most 9 symbols, dot-separated otherwise.
pub(crate) fn format_codes(codes: &[u8], k: usize) -> String {
    if k <= 9 {
        codes.iter().map(|&c| char::from(b'1' + c)).collect()
    } else {
        join_symbols(codes)
    }
}

fn join_symbols(codes: &[u8]) -> String {
    codes
        .iter()
        .map(|&c| (usize::from(c) + 1).to_string())
        .collect::<Vec<_>>()
        .join(".")
}

/// A function on `X(A)` that only depends on the first `depth` symbols.
#[derive(Clone, Debug)]
pub struct CylinderFunction<T = f64> {
    shift: Arc<Subshift>,
    depth: usize,
    values: Vec<T>,
}

impl<T: Copy> CylinderFunction<T> {
    /// Values listed in the lexicographic order of `admissible_words(depth)`.
    pub fn from_values(shift: Arc<Subshift>, depth: usize, values: Vec<T>) -> Result<Self> {
        if depth == 0 {
            return Err(Error::DepthTooShallow {
                required: 1,
                actual: 0,
            });
        }
        let expected = shift.word_count(depth);
        if values.len() != expected {
            return Err(Error::LengthMismatch {
                depth,
                expected,
                actual: values.len(),
            });
        }
        Ok(CylinderFunction {
            shift,
            depth,
            values,
        })
    }

    pub fn from_fn(shift: Arc<Subshift>, depth: usize, mut f: impl FnMut(&[u8]) -> T) -> Self {
        let layer = shift.layer(depth);
        let mut values = Vec::with_capacity(layer.len());
        layer.for_each(|_, w| values.push(f(w)));
        CylinderFunction {
            shift,
            depth,
            values,
        }
    }

    pub fn constant(shift: Arc<Subshift>, depth: usize, value: T) -> Self {
        let n = shift.word_count(depth);
        CylinderFunction {
            shift,
            depth,
            values: vec![value; n],
        }
    }

    pub fn shift(&self) -> &Arc<Subshift> {
        &self.shift
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// `(word, value)` pairs in lexicographic order.
    pub fn entries(&self) -> Vec<(Word, T)> {
        let mut out = Vec::with_capacity(self.values.len());
        self.shift.layer(self.depth).for_each(|i, w| {
            out.push((Word::from_codes(w.to_vec(), self.shift.k), self.values[i]));
        });
        out
    }

    /// Value on the cylinder containing `word`; `word` may be longer than
    /// the depth, in which case its prefix is used.
    pub fn value(&self, word: &Word) -> Result<T> {
        if word.len() < self.depth {
            return Err(Error::WordTooShort {
                word: word.to_string(),
                depth: self.depth,
            });
        }
        self.lookup()
            .get(word.codes())
            .ok_or_else(|| Error::InadmissibleWord(word.to_string()))
    }

    pub(crate) fn lookup(&self) -> Lookup<'_, T> {
        Lookup {
            layer: self.shift.layer(self.depth),
            values: &self.values,
        }
    }

    /// Same function, stored at depth `depth >= self.depth()`.
    pub fn promote(&self, depth: usize) -> Result<Self> {
        if depth < self.depth {
            return Err(Error::DepthDowngrade {
                from: self.depth,
                to: depth,
            });
        }
        if depth == self.depth {
            return Ok(self.clone());
        }
        let lookup = self.lookup();
        Ok(Self::from_fn(self.shift.clone(), depth, |w| {
            lookup.get(w).expect("prefixes of admissible words are admissible")
        }))
    }

    /// `f ∘ r`, a function of depth `depth + 1`.
    pub fn compose_with_shift(&self) -> Self {
        let lookup = self.lookup();
        Self::from_fn(self.shift.clone(), self.depth + 1, |w| {
            lookup.get(&w[1..]).expect("suffixes of admissible words are admissible")
        })
    }

    pub fn map<U: Copy>(&self, mut f: impl FnMut(T) -> U) -> CylinderFunction<U> {
        CylinderFunction {
            shift: self.shift.clone(),
            depth: self.depth,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination at the common (larger) depth.
    pub fn zip_with<U: Copy, R: Copy>(
        &self,
        other: &CylinderFunction<U>,
        mut f: impl FnMut(T, U) -> R,
    ) -> Result<CylinderFunction<R>> {
        if self.shift != other.shift {
            return Err(Error::ShiftMismatch);
        }
        let depth = self.depth.max(other.depth);
        let a = self.promote(depth)?;
        let b = other.promote(depth)?;
        Ok(CylinderFunction {
            shift: self.shift.clone(),
            depth,
            values: a
                .values
                .iter()
                .zip(&b.values)
                .map(|(&x, &y)| f(x, y))
                .collect(),
        })
    }
}

/// Prefix evaluation against a fixed layer, for inner loops.
pub(crate) struct Lookup<'a, T> {
    layer: Layer<'a>,
    values: &'a [T],
}

impl<T: Copy> Lookup<'_, T> {
    #[inline]
    pub(crate) fn get(&self, w: &[u8]) -> Option<T> {
        self.layer.rank(w).map(|i| self.values[i])
    }
}

impl CylinderFunction<f64> {
    /// `χ_[w]` at depth `|w|`.
    pub fn indicator(shift: Arc<Subshift>, word: &Word) -> Self {
        let target = word.codes().to_vec();
        Self::from_fn(shift, word.len(), |w| if w == target.as_slice() { 1.0 } else { 0.0 })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn inf(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `sup |f - g|` at the common depth.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Ok(self
            .zip_with(other, |a, b| (a - b).abs())?
            .values
            .iter()
            .copied()
            .fold(0.0, f64::max))
    }

    pub(crate) fn check_nonnegative(&self) -> Result<()> {
        self.first_negative()
            .map_or(Ok(()), |(word, value)| Err(Error::NegativeWeight { word, value }))
    }

    pub(crate) fn first_negative(&self) -> Option<(String, f64)> {
        let i = self.values.iter().position(|&v| v < 0.0 || v.is_nan())?;
        let mut found = None;
        self.shift.layer(self.depth).for_each(|j, w| {
            if j == i {
                found = Some(format_codes(w, self.shift.k));
            }
        });
        Some((found.unwrap_or_default(), self.values[i]))
    }

    /// Treats the values as cylinder masses and sums them over common
    /// prefixes of length `depth <= self.depth()`.
    pub fn aggregate(&self, depth: usize) -> Result<Self> {
        if depth > self.depth {
            return Err(Error::DepthTooShallow {
                required: depth,
                actual: self.depth,
            });
        }
        if depth == 0 {
            return Err(Error::DepthTooShallow {
                required: 1,
                actual: 0,
            });
        }
        let coarse = self.shift.layer(depth);
        let mut values = vec![0.0; coarse.len()];
        self.shift.layer(self.depth).for_each(|i, w| {
            let j = coarse.rank(w).expect("prefix of admissible word");
            values[j] += self.values[i];
        });
        Ok(CylinderFunction {
            shift: self.shift.clone(),
            depth,
            values,
        })
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// `V^(n)(x) = V(x) V(r x) ... V(r^{n-1} x)`, of depth `depth + n - 1`.
    pub fn weight_product(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Invalid("weight_product needs n >= 1".into()));
        }
        self.check_nonnegative()?;
        let m = self.depth;
        let lookup = self.lookup();
        Ok(Self::from_fn(self.shift.clone(), m + n - 1, |w| {
            (0..n)
                .map(|i| lookup.get(&w[i..]).expect("admissible suffix"))
                .product()
        }))
    }
}
