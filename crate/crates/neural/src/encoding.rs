//! Character one-hots, fixed-count io sampling and recurrent string
//! encoders.

use rand::seq::{index, SliceRandom};
use rand::Rng;
use thiserror::Error;

use synth_core::datagen::CharMap;

use crate::graph::{Graph, NodeId};
use crate::params::{ParamId, ParamStore};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("character {0:?} is not in the character map")]
    UnknownChar(char),
    #[error("text of length {len} exceeds the maximum length {max}")]
    Overlong { len: usize, max: usize },
    #[error("expected {expected} features, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("no io pairs to sample from")]
    EmptyPool,
}

/// `t x (|charmap| + 1)` indicator rows; rows past the text use the pad
/// column `|charmap|`.
pub fn one_hot(text: &str, charmap: &CharMap, t: usize) -> Result<Vec<f64>, EncodeError> {
    let width = charmap.len() + 1;
    let len = text.chars().count();
    if len > t {
        return Err(EncodeError::Overlong { len, max: t });
    }
    let mut out = vec![0.0; t * width];
    let mut chars = text.chars();
    for row in 0..t {
        let col = match chars.next() {
            Some(c) => charmap.index(c).ok_or(EncodeError::UnknownChar(c))?,
            None => charmap.len(),
        };
        out[row * width + col] = 1.0;
    }
    Ok(out)
}

/// Exactly `n` items: a uniform subset without replacement when enough are
/// available, otherwise every item `n / k` times plus `n % k` distinct
/// extras. The result is shuffled.
pub fn fix_sample_count<T: Clone>(items: &[T], n: usize, rng: &mut impl Rng) -> Result<Vec<T>, EncodeError> {
    let k = items.len();
    if k == 0 {
        return Err(EncodeError::EmptyPool);
    }
    let mut out: Vec<T> = Vec::with_capacity(n);
    if k >= n {
        out.extend(index::sample(rng, k, n).into_iter().map(|i| items[i].clone()));
    } else {
        for _ in 0..n / k {
            out.extend_from_slice(items);
        }
        out.extend(index::sample(rng, k, n % k).into_iter().map(|i| items[i].clone()));
    }
    out.shuffle(rng);
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmDir {
    pub w: ParamId,
    pub b: ParamId,
}

/// Stacked bidirectional LSTM; layer `k > 0` reads the concatenated
/// forward and backward states of layer `k - 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BiLstmStack {
    pub layers: Vec<(LstmDir, LstmDir)>,
    pub input: usize,
    pub hidden: usize,
}

fn lstm_dir(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> LstmDir {
    let bound = 1.0 / (hidden as f64).sqrt();
    let w = store.add_uniform(&format!("{name}.w"), &[input + hidden, 4 * hidden], bound, rng);
    // gate order i, f, g, o; forget bias starts at 1
    let b = store.add(&format!("{name}.b"), &[4 * hidden], |i| {
        if (hidden..2 * hidden).contains(&i) {
            1.0
        } else {
            0.0
        }
    });
    LstmDir { w, b }
}

impl BiLstmStack {
    pub fn create(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        layers: usize,
        rng: &mut impl Rng,
    ) -> BiLstmStack {
        let layers = (0..layers)
            .map(|k| {
                let width = if k == 0 { input } else { 2 * hidden };
                (
                    lstm_dir(store, &format!("{prefix}.l{k}.fwd"), width, hidden, rng),
                    lstm_dir(store, &format!("{prefix}.l{k}.bwd"), width, hidden, rng),
                )
            })
            .collect();
        BiLstmStack { layers, input, hidden }
    }

    /// Top-layer states, `steps x 2 * hidden`, forward half first.
    pub fn run(&self, g: &mut Graph, x: NodeId) -> NodeId {
        let steps = g.len(x) / self.input;
        let mut cur = x;
        for (f, b) in &self.layers {
            let fo = g.lstm(f.w, f.b, cur, false);
            let bo = g.lstm(b.w, b.b, cur, true);
            cur = g.concat_cols(fo, bo, steps);
        }
        cur
    }
}

/// Input and output string encoders. The typed form reads io and type
/// one-hots side by side at every step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairEncoder {
    pub input: BiLstmStack,
    pub output: BiLstmStack,
    pub typed: bool,
    pub t: usize,
}

impl PairEncoder {
    pub fn create(
        store: &mut ParamStore,
        charmap_len: usize,
        t: usize,
        hidden: usize,
        layers: usize,
        typed: bool,
        rng: &mut impl Rng,
    ) -> PairEncoder {
        let width = if typed { 2 * (charmap_len + 1) } else { charmap_len + 1 };
        PairEncoder {
            input: BiLstmStack::create(store, "enc.in", width, hidden, layers, rng),
            output: BiLstmStack::create(store, "enc.out", width, hidden, layers, rng),
            typed,
            t,
        }
    }

    /// Features per pair: `2 * 2 * hidden * t`, i.e. `4HT`, or `8HT` for
    /// the typed form whose stacks are twice as wide.
    pub fn width(&self) -> usize {
        4 * self.input.hidden * self.t
    }
}

fn side_by_side(a: &[f64], b: &[f64], t: usize) -> Vec<f64> {
    let (wa, wb) = (a.len() / t, b.len() / t);
    let mut out = Vec::with_capacity(a.len() + b.len());
    for r in 0..t {
        out.extend_from_slice(&a[r * wa..(r + 1) * wa]);
        out.extend_from_slice(&b[r * wb..(r + 1) * wb]);
    }
    out
}

/// Encodes one io pair into a flat feature vector of [`PairEncoder::width`]
/// entries; `types` carries the parameter and result type texts and is
/// required exactly for the typed form.
pub fn encode_pair(
    g: &mut Graph,
    enc: &PairEncoder,
    charmap: &CharMap,
    input: &str,
    output: &str,
    types: Option<(&str, &str)>,
) -> Result<NodeId, EncodeError> {
    let t = enc.t;
    let (xi, xo) = match (enc.typed, types) {
        (false, None) => (one_hot(input, charmap, t)?, one_hot(output, charmap, t)?),
        (true, Some((ti, to))) => (
            side_by_side(&one_hot(input, charmap, t)?, &one_hot(ti, charmap, t)?, t),
            side_by_side(&one_hot(output, charmap, t)?, &one_hot(to, charmap, t)?, t),
        ),
        (typed, _) => {
            return Err(EncodeError::ShapeMismatch {
                expected: if typed { 2 } else { 0 },
                found: if typed { 0 } else { 2 },
            })
        }
    };
    if xi.len() != t * enc.input.input {
        return Err(EncodeError::ShapeMismatch {
            expected: t * enc.input.input,
            found: xi.len(),
        });
    }
    let xi = g.input(xi);
    let xo = g.input(xo);
    let hi = enc.input.run(g, xi);
    let ho = enc.output.run(g, xo);
    Ok(g.concat(&[hi, ho]))
}

/// Recurrent type-string encoder with a per-step projection to `m`
/// features.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeEncoder {
    pub stack: BiLstmStack,
    pub proj_w: ParamId,
    pub proj_b: ParamId,
    pub m: usize,
    pub t: usize,
}

impl TypeEncoder {
    pub fn create(
        store: &mut ParamStore,
        charmap_len: usize,
        t: usize,
        hidden: usize,
        layers: usize,
        m: usize,
        rng: &mut impl Rng,
    ) -> TypeEncoder {
        let stack = BiLstmStack::create(store, "types", charmap_len + 1, hidden, layers, rng);
        let bound = 1.0 / ((2 * hidden) as f64).sqrt();
        let proj_w = store.add_uniform("types.proj.w", &[2 * hidden, m], bound, rng);
        let proj_b = store.add_uniform("types.proj.b", &[m], bound, rng);
        TypeEncoder {
            stack,
            proj_w,
            proj_b,
            m,
            t,
        }
    }

    pub fn width(&self) -> usize {
        self.m * self.t
    }
}

/// `m * t` features for one type string.
pub fn encode_type_string(g: &mut Graph, enc: &TypeEncoder, charmap: &CharMap, text: &str) -> Result<NodeId, EncodeError> {
    let x = g.input(one_hot(text, charmap, enc.t)?);
    let h = enc.stack.run(g, x);
    Ok(g.affine(enc.proj_w, enc.proj_b, h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;
    use synth_core::rng::substream;

    fn abc() -> CharMap {
        CharMap::from_texts(["abc"])
    }

    #[test]
    fn one_hot_indicator_rows() {
        assert_eq!(one_hot("b", &abc(), 1).unwrap(), vec![0.0, 1.0, 0.0, 0.0]);
        let pad = one_hot("", &abc(), 3).unwrap();
        assert_eq!(pad, [0.0, 0.0, 0.0, 1.0].repeat(3));
        let m = one_hot("cab", &abc(), 5).unwrap();
        assert!(m.chunks(4).all(|r| r.iter().sum::<f64>() == 1.0));
        assert_eq!(one_hot("abcd", &abc(), 9), Err(EncodeError::UnknownChar('d')));
        assert_eq!(one_hot("abc", &abc(), 2), Err(EncodeError::Overlong { len: 3, max: 2 }));
    }

    fn counts(v: &[u32]) -> HashMap<u32, usize> {
        let mut m = HashMap::new();
        for x in v {
            *m.entry(*x).or_default() += 1;
        }
        m
    }

    #[test]
    fn sample_count_rules() {
        let mut rng = substream(0, "fix");
        let ten: Vec<u32> = (0..10).collect();
        let s = fix_sample_count(&ten, 8, &mut rng).unwrap();
        assert_eq!(s.len(), 8);
        assert_eq!(counts(&s).len(), 8);

        let four: Vec<u32> = (0..4).collect();
        let s = fix_sample_count(&four, 10, &mut rng).unwrap();
        let c = counts(&s);
        assert_eq!(s.len(), 10);
        assert_eq!(c.values().filter(|&&n| n == 3).count(), 2);
        assert_eq!(c.values().filter(|&&n| n == 2).count(), 2);

        let mut s = fix_sample_count(&ten, 10, &mut rng).unwrap();
        s.sort();
        assert_eq!(s, ten);
        assert_eq!(fix_sample_count::<u32>(&[], 3, &mut rng), Err(EncodeError::EmptyPool));
    }

    #[test]
    fn pair_widths() {
        let cm = abc();
        for typed in [false, true] {
            let mut store = ParamStore::new();
            // H = 4; the typed stacks are 2H wide
            let hidden = if typed { 8 } else { 4 };
            let enc = PairEncoder::create(&mut store, cm.len(), 6, hidden, 3, typed, &mut substream(1, "e"));
            let mut g = Graph::new(&store);
            let types = typed.then_some(("a", "b"));
            let v = encode_pair(&mut g, &enc, &cm, "ab", "c", types).unwrap();
            let per_h = if typed { 8 } else { 4 };
            assert_eq!(g.len(v), per_h * 4 * 6);
            assert_eq!(enc.width(), per_h * 4 * 6);
            assert!(encode_pair(&mut g, &enc, &cm, "ab", "c", if typed { None } else { Some(("a", "b")) }).is_err());
        }
    }

    #[test]
    fn zero_weights_give_identical_pairs() {
        let cm = abc();
        let mut store = ParamStore::new();
        let enc = PairEncoder::create(&mut store, cm.len(), 4, 3, 3, false, &mut substream(1, "e"));
        for id in 0..store.len() {
            store.data_mut(id).iter_mut().for_each(|x| *x = 0.0);
        }
        let mut g = Graph::new(&store);
        let a = encode_pair(&mut g, &enc, &cm, "ab", "c", None).unwrap();
        let b = encode_pair(&mut g, &enc, &cm, "cca", "", None).unwrap();
        assert_eq!(g.value(a), g.value(b));
        // i = o = sigmoid(0), g = 0, so c and h stay 0
        assert!(g.value(a).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn type_strings() {
        let cm = CharMap::from_texts(["IntChar"]);
        let mut store = ParamStore::new();
        let enc = TypeEncoder::create(&mut store, cm.len(), 5, 4, 3, 3, &mut substream(2, "t"));
        let mut g = Graph::new(&store);
        let a = encode_type_string(&mut g, &enc, &cm, "Int").unwrap();
        let b = encode_type_string(&mut g, &enc, &cm, "Int").unwrap();
        let c = encode_type_string(&mut g, &enc, &cm, "Char").unwrap();
        assert_eq!(g.len(a), 15);
        assert_eq!(g.value(a), g.value(b));
        assert_ne!(g.value(a), g.value(c));
        assert!(encode_type_string(&mut g, &enc, &cm, "IntInt").is_err());
    }
}
