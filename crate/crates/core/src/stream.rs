//! Timestamped input/target streams.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::netspec::check_tau;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct StreamItem {
    pub u: Tensor,
    pub y_hat: Option<Tensor>,
    /// Set on the last token of a sequence (and on every i.i.d. sample).
    pub delta: bool,
    pub timestamp: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamKind {
    IidDataset,
    TokenSequence,
    ReverseReplay,
    Custom,
}

/// A token sequence with optional per-token targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub tokens: Vec<Tensor>,
    pub targets: Vec<Option<Tensor>>,
}

impl Sequence {
    pub fn new(tokens: Vec<Tensor>, targets: Vec<Option<Tensor>>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Empty("sequence"));
        }
        if tokens.len() != targets.len() {
            return Err(Error::invalid("one target slot per token is required"));
        }
        let width = tokens[0].shape();
        if tokens.iter().any(|t| t.shape() != width) {
            return Err(Error::invalid("tokens must share one shape"));
        }
        let mut supervised = targets.iter().flatten();
        if let Some(first) = supervised.next() {
            if supervised.any(|t| t.shape() != first.shape()) {
                return Err(Error::invalid("targets must share one shape"));
            }
        }
        Ok(Self { tokens, targets })
    }

    /// Every token carries a target.
    pub fn fully_supervised(tokens: Vec<Tensor>, targets: Vec<Tensor>) -> Result<Self> {
        Self::new(tokens, targets.into_iter().map(Some).collect())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn item(&self, index: usize) -> (Tensor, Option<Tensor>) {
        (self.tokens[index].clone(), self.targets[index].clone())
    }
}

/// A finite, ordered stream with strictly increasing timestamps.
#[derive(Clone, Debug, PartialEq)]
pub struct Stream {
    kind: StreamKind,
    items: Vec<StreamItem>,
}

fn even_times(n: usize, tau: f64) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| i as f64 * tau)
}

impl Stream {
    /// Wraps arbitrary items; timestamps must strictly increase.
    pub fn custom(items: Vec<StreamItem>) -> Result<Self> {
        let s = Self { kind: StreamKind::Custom, items };
        s.check_times()?;
        Ok(s)
    }

    fn check_times(&self) -> Result<()> {
        if self.items.iter().any(|i| !(i.timestamp >= 0.0) || !i.timestamp.is_finite()) {
            return Err(Error::invalid("timestamps must be non-negative and finite"));
        }
        if self.items.windows(2).any(|w| !(w[1].timestamp > w[0].timestamp)) {
            return Err(Error::invalid("timestamps must strictly increase"));
        }
        Ok(())
    }

    pub fn kind(&self) -> StreamKind {
        self.kind
    }

    pub fn items(&self) -> &[StreamItem] {
        &self.items
    }

    pub fn iter(&self) -> core::slice::Iter<'_, StreamItem> {
        self.items.iter()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Gaps between consecutive timestamps.
    pub fn spacings(&self) -> Vec<f64> {
        self.items.windows(2).map(|w| w[1].timestamp - w[0].timestamp).collect()
    }

    /// Replaces the timestamps with an explicit list.
    pub fn with_timestamps(mut self, times: &[f64]) -> Result<Self> {
        if times.len() != self.items.len() {
            return Err(Error::invalid("timestamp list length does not match the stream"));
        }
        for (item, &t) in self.items.iter_mut().zip(times) {
            item.timestamp = t;
        }
        self.check_times()?;
        Ok(self)
    }

    /// Drops items that arrive while the agent is still busy with an earlier
    /// one; `duration` gives the processing time of each accepted item.
    pub fn decimate(self, duration: impl Fn(&StreamItem) -> f64) -> Self {
        let mut busy_until = f64::NEG_INFINITY;
        let items = self
            .items
            .into_iter()
            .filter(|item| {
                if item.timestamp < busy_until {
                    return false;
                }
                busy_until = item.timestamp + duration(item);
                true
            })
            .collect();
        Self { kind: self.kind, items }
    }

    /// Splits a token stream into sequences at every `delta` tag. Trailing
    /// tokens without a closing tag form a final sequence.
    pub fn sequences(&self) -> Vec<Sequence> {
        let mut out = Vec::new();
        let mut tokens = Vec::new();
        let mut targets = Vec::new();
        for item in &self.items {
            tokens.push(item.u.clone());
            targets.push(item.y_hat.clone());
            if item.delta {
                out.push(Sequence { tokens: core::mem::take(&mut tokens), targets: core::mem::take(&mut targets) });
            }
        }
        if !tokens.is_empty() {
            out.push(Sequence { tokens, targets });
        }
        out
    }
}

impl<'a> IntoIterator for &'a Stream {
    type Item = &'a StreamItem;
    type IntoIter = core::slice::Iter<'a, StreamItem>;

    fn into_iter(self) -> Self::IntoIter {
        self.items.iter()
    }
}

/// One pass over `samples`, optionally shuffled, spaced by `tau`.
pub fn from_dataset(samples: &[(Tensor, Tensor)], shuffle_seed: Option<u64>, tau: f64) -> Result<Stream> {
    from_dataset_epochs(samples, shuffle_seed, tau, 1)
}

/// `epochs` passes over `samples`; with a seed, every epoch is reshuffled
/// from one generator so the whole stream is reproducible.
pub fn from_dataset_epochs(
    samples: &[(Tensor, Tensor)],
    shuffle_seed: Option<u64>,
    tau: f64,
    epochs: usize,
) -> Result<Stream> {
    if samples.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    check_tau(tau)?;
    let mut rng = shuffle_seed.map(ChaCha8Rng::seed_from_u64);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut items = Vec::with_capacity(samples.len() * epochs);
    let mut times = even_times(samples.len() * epochs, tau);
    for _ in 0..epochs {
        if let Some(rng) = rng.as_mut() {
            order.shuffle(rng);
        }
        for &i in &order {
            let (u, y) = &samples[i];
            items.push(StreamItem {
                u: u.clone(),
                y_hat: Some(y.clone()),
                delta: true,
                timestamp: times.next().expect("one time per item"),
            });
        }
    }
    Ok(Stream { kind: StreamKind::IidDataset, items })
}

/// Streams sequences token by token; `delta` marks each sequence's end.
pub fn tokenize_sequences(seqs: &[Sequence], tau: f64) -> Result<Stream> {
    check_tau(tau)?;
    if seqs.iter().any(|s| s.is_empty()) {
        return Err(Error::Empty("sequence"));
    }
    let total = seqs.iter().map(Sequence::len).sum();
    let mut times = even_times(total, tau);
    let mut items = Vec::with_capacity(total);
    for s in seqs {
        for (k, (u, y)) in s.tokens.iter().zip(&s.targets).enumerate() {
            items.push(StreamItem {
                u: u.clone(),
                y_hat: y.clone(),
                delta: k + 1 == s.len(),
                timestamp: times.next().expect("one time per token"),
            });
        }
    }
    Ok(Stream { kind: StreamKind::TokenSequence, items })
}

/// Tokens `0..n` followed by `n−2..0`: `2n − 1` items.
pub fn reverse_replay(seq: &Sequence, tau: f64) -> Result<Stream> {
    truncated_replay_stream(seq, seq.len(), tau)
}

/// Tokens `0..n` followed by the last `r − 1` of them in reverse order.
pub fn truncated_replay_stream(seq: &Sequence, r: usize, tau: f64) -> Result<Stream> {
    check_tau(tau)?;
    let n = seq.len();
    if n == 0 {
        return Err(Error::Empty("sequence"));
    }
    if r == 0 || r > n {
        return Err(Error::invalid("replay window must satisfy 1 <= r <= n"));
    }
    let order = (0..n).chain((n - r..n - 1).rev());
    let mut times = even_times(n + r - 1, tau);
    let items = order
        .map(|i| StreamItem {
            u: seq.tokens[i].clone(),
            y_hat: seq.targets[i].clone(),
            delta: false,
            timestamp: times.next().expect("one time per item"),
        })
        .collect::<Vec<_>>();
    let mut items = items;
    if let Some(last) = items.last_mut() {
        last.delta = true;
    }
    Ok(Stream { kind: StreamKind::ReverseReplay, items })
}

/// `ψ(t) = 2·t_last − 2τ − t`.
pub fn psi_map(t: f64, t_last: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    if !(t > t_last) {
        return Err(Error::invalid("psi_map needs t > t_last"));
    }
    Ok(2.0 * t_last - 2.0 * tau - t)
}
