//! Document packing into fixed-width training rows.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::Batch;
use super::LmError;
use crate::corpus::FieldTag;
use crate::serializer::SpecialToken;
use crate::tokenizer::Vocab;

/// A document's token ids plus, for each position, whether predicting the
/// following token contributes to the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub ids: Vec<u32>,
    pub mask: Vec<bool>,
}

impl Segment {
    /// Every position except the last is a target.
    pub fn train(ids: Vec<u32>) -> Self {
        let n = ids.len();
        let mask = (0..n).map(|i| i + 1 < n).collect();
        Segment { ids, mask }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Shortens a serialized document to `max_len` tokens by cutting the tail of
/// the body while keeping the closing `<end-body>`. Documents that do not end
/// with `<end-body>` are cut at `max_len`.
pub fn fit_to_window(ids: &[u32], max_len: usize) -> Result<Vec<u32>, LmError> {
    if ids.len() <= max_len {
        return Ok(ids.to_vec());
    }
    let end_body = Vocab::special_id(SpecialToken::FieldEnd(FieldTag::Body));
    let start_body = Vocab::special_id(SpecialToken::FieldStart(FieldTag::Body));
    if ids.last() != Some(&end_body) {
        return Ok(ids[..max_len].to_vec());
    }
    let body_at = ids.iter().rposition(|&x| x == start_body).unwrap_or(0);
    if body_at + 2 > max_len {
        return Err(LmError::ContextOverflow { len: body_at + 2, max: max_len });
    }
    let mut out = ids[..max_len - 1].to_vec();
    out.push(end_body);
    Ok(out)
}

/// Where a segment landed inside a packed batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub segment: usize,
    pub batch: usize,
    /// Flat offset of the segment's first token inside the batch.
    pub offset: usize,
}

/// Packs whole segments greedily into rows of width `t`, then groups rows into
/// batches of `b`. Row tails (and a short final batch) are filled with masked
/// padding.
pub fn pack(segments: &[&Segment], t: usize, b: usize) -> Result<Vec<Batch>, LmError> {
    Ok(pack_indexed(segments, t, b)?.0)
}

/// [`pack`] that also reports each segment's placement (empty segments are
/// skipped and get none).
pub fn pack_indexed(segments: &[&Segment], t: usize, b: usize) -> Result<(Vec<Batch>, Vec<Placement>), LmError> {
    let b = b.max(1);
    let mut rows: Vec<Vec<&Segment>> = Vec::new();
    let mut cur: Vec<&Segment> = Vec::new();
    let mut placements = Vec::new();
    let mut used = 0;
    for (k, &s) in segments.iter().enumerate() {
        if s.len() > t {
            return Err(LmError::ContextOverflow { len: s.len(), max: t });
        }
        if s.is_empty() {
            continue;
        }
        if used + s.len() > t {
            rows.push(std::mem::take(&mut cur));
            used = 0;
        }
        let row = rows.len();
        placements.push(Placement { segment: k, batch: row / b, offset: (row % b) * t + used });
        used += s.len();
        cur.push(s);
    }
    if !cur.is_empty() {
        rows.push(cur);
    }
    let batches = rows.chunks(b).map(|chunk| assemble(chunk, t, b)).collect();
    Ok((batches, placements))
}

fn assemble(rows: &[Vec<&Segment>], t: usize, b: usize) -> Batch {
    let pad = Vocab::special_id(SpecialToken::Pad);
    let n = b * t;
    let mut batch = Batch {
        b,
        t,
        ids: Vec::with_capacity(n),
        positions: Vec::with_capacity(n),
        seg_start: Vec::with_capacity(n),
        targets: Vec::with_capacity(n),
        mask: Vec::with_capacity(n),
    };
    for r in 0..b {
        let mut at = 0usize;
        if let Some(row) = rows.get(r) {
            for s in row {
                for i in 0..s.len() {
                    batch.ids.push(s.ids[i]);
                    batch.positions.push(i as u32);
                    batch.seg_start.push(at as u32);
                    let has_next = i + 1 < s.len();
                    batch.targets.push(if has_next { s.ids[i + 1] } else { pad });
                    batch.mask.push(has_next && s.mask[i]);
                }
                at += s.len();
            }
        }
        let pad_start = at;
        for i in at..t {
            batch.ids.push(pad);
            batch.positions.push((i - pad_start) as u32);
            batch.seg_start.push(pad_start as u32);
            batch.targets.push(pad);
            batch.mask.push(false);
        }
    }
    batch
}

/// Endless, seeded stream of training batches: each epoch shuffles the
/// documents and packs them.
pub struct BatchStream {
    segments: Vec<Segment>,
    t: usize,
    b: usize,
    rng: ChaCha8Rng,
    queue: std::collections::VecDeque<Batch>,
    pub epoch: usize,
}

impl BatchStream {
    pub fn new(docs: Vec<Vec<u32>>, t: usize, b: usize, seed: u64) -> Result<Self, LmError> {
        let segments = docs
            .iter()
            .map(|d| fit_to_window(d, t).map(Segment::train))
            .collect::<Result<Vec<_>, _>>()?;
        if segments.iter().all(|s| s.mask.iter().all(|m| !m)) {
            return Err(LmError::NoData("no document has a prediction target".into()));
        }
        Ok(BatchStream { segments, t, b, rng: ChaCha8Rng::seed_from_u64(seed), queue: Default::default(), epoch: 0 })
    }

    fn refill(&mut self) {
        let mut order: Vec<usize> = (0..self.segments.len()).collect();
        order.shuffle(&mut self.rng);
        let segs: Vec<&Segment> = order.iter().map(|&i| &self.segments[i]).collect();
        let batches = pack(&segs, self.t, self.b).expect("segments were fit to the window");
        self.queue.extend(batches.into_iter().filter(|b| b.n_targets() > 0));
        self.epoch += 1;
    }

    pub fn next_batch(&mut self) -> Batch {
        if self.queue.is_empty() {
            self.refill();
        }
        self.queue.pop_front().expect("refill yields at least one batch")
    }
}
