//! Density clustering of per-pixel decoded messages.
//!
//! After extraction, every pixel above the detection threshold carries a hard
//! decoded bit string. Pixels watermarked with the same message decode to
//! identical or nearly identical strings, so DBSCAN under Hamming distance
//! separates multiple watermarks in one image and drops stray false-positive
//! pixels as noise.
//!
//! The implementation deduplicates identical strings and runs DBSCAN over
//! distinct words weighted by their pixel counts, which is equivalent to
//! running point-level DBSCAN over every pixel (all copies of a word share
//! one neighborhood, hence one core status and one label) while staying fast
//! when millions of pixels decode to a few distinct words. Candidate
//! neighbors come from a pigeonhole prefilter: the bit positions are split
//! into epsilon+1 chunks, and two words within Hamming distance epsilon must
//! agree exactly on at least one chunk.

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::raster::Message;

/// DBSCAN parameters over Hamming distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DbscanParams {
    /// Neighborhood radius: words at Hamming distance <= epsilon are
    /// neighbors.
    pub epsilon: usize,
    /// Minimum number of pixels (the word itself included) in a
    /// neighborhood for a word to be a core word.
    pub min_samples: usize,
    /// Also compute each cluster's medoid, the member word minimizing the
    /// pixel-weighted sum of distances to the cluster.
    pub compute_medoid: bool,
}

impl Default for DbscanParams {
    fn default() -> Self {
        DbscanParams {
            epsilon: 1,
            min_samples: 1000,
            compute_medoid: false,
        }
    }
}

/// One recovered cluster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterInfo {
    /// Pixel-weighted bitwise majority of the members; ties decode to 0.
    pub centroid: Message,
    /// Member word with the smallest pixel-weighted total distance to the
    /// cluster, when requested; ties pick the numerically smallest word.
    pub medoid: Option<Message>,
    /// Number of member pixels (points, not distinct words).
    pub pixel_count: usize,
}

/// Clustering result: a label per input point (`None` marks noise) and the
/// clusters sorted by descending pixel count, ties by ascending centroid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    pub labels: Vec<Option<usize>>,
    pub clusters: Vec<ClusterInfo>,
}

fn pack(msg: &Message, limbs: usize) -> Vec<u64> {
    let mut w = vec![0u64; limbs];
    for (k, &b) in msg.bits().iter().enumerate() {
        w[k / 64] |= (b as u64) << (k % 64);
    }
    w
}

fn unpack(word: &[u64], n_bits: usize) -> Message {
    Message::new((0..n_bits).map(|k| ((word[k / 64] >> (k % 64)) & 1) as u8).collect())
}

fn hamming(a: &[u64], b: &[u64]) -> usize {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones() as usize).sum()
}

/// Bits lo..hi of a packed word, shifted down to a fresh key.
fn chunk_key(word: &[u64], lo: usize, hi: usize) -> Vec<u64> {
    let mut key = Vec::with_capacity((hi - lo).div_ceil(64).max(1));
    let mut k = lo;
    while k < hi {
        let take = (hi - k).min(64);
        let mut limb = 0u64;
        for t in 0..take {
            let bit = (word[(k + t) / 64] >> ((k + t) % 64)) & 1;
            limb |= bit << t;
        }
        key.push(limb);
        k += take;
    }
    key
}

/// Clusters points under Hamming distance.
///
/// Seeds are scanned in input order, so cluster identity is deterministic: a
/// border word reachable from several clusters joins the earliest-formed one,
/// exactly as if plain DBSCAN had visited the points one by one.
pub fn dbscan(points: &[Message], params: &DbscanParams) -> Result<Clustering> {
    if points.is_empty() {
        return Ok(Clustering {
            labels: Vec::new(),
            clusters: Vec::new(),
        });
    }
    let n_bits = points[0].n_bits();
    for p in points {
        if p.n_bits() != n_bits {
            return Err(Error::PointLength {
                a: n_bits,
                b: p.n_bits(),
            });
        }
    }
    let limbs = n_bits.div_ceil(64).max(1);

    // Deduplicate into distinct words in first-occurrence order.
    let mut words: Vec<Vec<u64>> = Vec::new();
    let mut mult: Vec<usize> = Vec::new();
    let mut word_of_point = Vec::with_capacity(points.len());
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    for p in points {
        let w = pack(p, limbs);
        let id = match index.get(&w) {
            Some(&id) => id,
            None => {
                let id = words.len();
                index.insert(w.clone(), id);
                words.push(w);
                mult.push(0);
                id
            }
        };
        mult[id] += 1;
        word_of_point.push(id);
    }
    let m = words.len();

    // Neighbor lists via the chunk prefilter.
    let chunks = params.epsilon + 1;
    let mut bucket_of: Vec<Vec<usize>> = Vec::with_capacity(chunks);
    let mut bucket_members: Vec<Vec<Vec<u32>>> = Vec::with_capacity(chunks);
    for c in 0..chunks {
        let lo = c * n_bits / chunks;
        let hi = (c + 1) * n_bits / chunks;
        let mut buckets: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut members: Vec<Vec<u32>> = Vec::new();
        let mut of = Vec::with_capacity(m);
        for (i, w) in words.iter().enumerate() {
            let key = chunk_key(w, lo, hi);
            let b = match buckets.get(&key) {
                Some(&b) => b,
                None => {
                    let b = members.len();
                    buckets.insert(key, b);
                    members.push(Vec::new());
                    b
                }
            };
            members[b].push(i as u32);
            of.push(b);
        }
        bucket_of.push(of);
        bucket_members.push(members);
    }
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); m];
    let mut stamp = vec![u32::MAX; m];
    for i in 0..m {
        for c in 0..chunks {
            for &j in &bucket_members[c][bucket_of[c][i]] {
                let j = j as usize;
                if j <= i || stamp[j] == i as u32 {
                    continue;
                }
                stamp[j] = i as u32;
                if hamming(&words[i], &words[j]) <= params.epsilon {
                    adj[i].push(j as u32);
                    adj[j].push(i as u32);
                }
            }
        }
    }

    // Core words: neighborhood pixel weight, the word itself included.
    let core: Vec<bool> = (0..m)
        .map(|i| {
            let weight: usize = mult[i] + adj[i].iter().map(|&j| mult[j as usize]).sum::<usize>();
            weight >= params.min_samples
        })
        .collect();

    // Seeded expansion in first-occurrence order.
    let mut word_label: Vec<Option<usize>> = vec![None; m];
    let mut n_clusters = 0;
    let mut queue = VecDeque::new();
    for seed in 0..m {
        if word_label[seed].is_some() || !core[seed] {
            continue;
        }
        let label = n_clusters;
        n_clusters += 1;
        word_label[seed] = Some(label);
        queue.push_back(seed);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                let v = v as usize;
                if word_label[v].is_none() {
                    word_label[v] = Some(label);
                    if core[v] {
                        queue.push_back(v);
                    }
                }
            }
        }
    }

    // Cluster summaries.
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for (w, label) in word_label.iter().enumerate() {
        if let Some(l) = *label {
            members[l].push(w);
        }
    }
    let mut summaries: Vec<(usize, ClusterInfo)> = Vec::with_capacity(n_clusters);
    for (label, member_words) in members.iter().enumerate() {
        let pixel_count: usize = member_words.iter().map(|&w| mult[w]).sum();
        let mut ones = vec![0usize; n_bits];
        for &w in member_words {
            for (k, o) in ones.iter_mut().enumerate() {
                *o += mult[w] * ((words[w][k / 64] >> (k % 64)) & 1) as usize;
            }
        }
        let centroid = Message::new(
            ones.iter().map(|&o| (2 * o > pixel_count) as u8).collect(),
        );
        let medoid = params.compute_medoid.then(|| {
            member_words
                .iter()
                .map(|&w| {
                    let total: usize = member_words
                        .iter()
                        .map(|&u| mult[u] * hamming(&words[w], &words[u]))
                        .sum();
                    (total, unpack(&words[w], n_bits))
                })
                .min_by(|(da, wa), (db, wb)| da.cmp(db).then_with(|| wa.bits().cmp(wb.bits())))
                .expect("clusters are never empty")
                .1
        });
        summaries.push((
            label,
            ClusterInfo {
                centroid,
                medoid,
                pixel_count,
            },
        ));
    }
    summaries.sort_by(|(_, a), (_, b)| {
        b.pixel_count
            .cmp(&a.pixel_count)
            .then_with(|| a.centroid.bits().cmp(b.centroid.bits()))
    });
    let mut remap = vec![usize::MAX; n_clusters];
    for (rank, (old, _)) in summaries.iter().enumerate() {
        remap[*old] = rank;
    }
    let labels = word_of_point
        .iter()
        .map(|&w| word_label[w].map(|l| remap[l]))
        .collect();
    Ok(Clustering {
        labels,
        clusters: summaries.into_iter().map(|(_, info)| info).collect(),
    })
}
