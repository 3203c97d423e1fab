//! Keyed spread-spectrum carriers.
//!
//! A watermark key derives `n_bits + 1` periodic ±1 tile patterns: index 0 is
//! the synchronization/detection carrier, indices 1..=n_bits carry message
//! bits. Patterns repeat with period `tile` in both axes, so a carrier value
//! is a pure function of (seed, bit_index, i mod tile, j mod tile).
//!
//! For power-of-two tiles (including the default 8) the tiles are rows of a
//! Sylvester-Hadamard matrix under a keyed position permutation, keyed row
//! selection, and keyed sign: the carriers then have exactly zero tile mean
//! and exactly zero pairwise cross-correlation, which is what makes whole-tile
//! window correlations separate the bit channels cleanly. Other tile sizes
//! fall back to a counter-mode keyed hash, regenerating each tile until its
//! mean and (for tile >= 8) its cross-correlations against the carriers
//! accepted so far are within bounds.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Shared secret: a 256-bit seed plus the carrier geometry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WatermarkKey {
    seed: [u8; 32],
    n_bits: usize,
    tile: usize,
}

/// Maximum tile regeneration attempts per carrier on the hashed path.
const MAX_TILE_ATTEMPTS: usize = 100_000;

/// Tile-mean bound enforced on every carrier.
const MEAN_BOUND: f64 = 0.25;

/// Pairwise cross-correlation bound enforced for tile >= 8.
const CROSS_BOUND: f64 = 0.15;

impl WatermarkKey {
    /// Creates a key. `tile` must be >= 4 and `n_bits` >= 1.
    pub fn new(seed: [u8; 32], n_bits: usize, tile: usize) -> Result<Self> {
        if tile < 4 {
            return Err(Error::BadParam(format!("tile must be >= 4, got {tile}")));
        }
        if n_bits < 1 {
            return Err(Error::BadParam("n_bits must be >= 1".into()));
        }
        Ok(WatermarkKey { seed, n_bits, tile })
    }

    /// Creates a key with a seed drawn from the given RNG.
    pub fn generate<R: Rng>(rng: &mut R, n_bits: usize, tile: usize) -> Result<Self> {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        WatermarkKey::new(seed, n_bits, tile)
    }

    pub fn seed(&self) -> &[u8; 32] {
        &self.seed
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn tile(&self) -> usize {
        self.tile
    }

    /// Deterministic RNG stream bound to this key and a domain label.
    fn stream(&self, domain: &[u8]) -> ChaCha12Rng {
        let mut h = Sha256::new();
        h.update(self.seed);
        h.update([domain.len() as u8]);
        h.update(domain);
        ChaCha12Rng::from_seed(h.finalize().into())
    }

    /// Writes the binary key file: magic "PSKY", u32 LE n_bits, u32 LE tile,
    /// then the 32-byte seed.
    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::with_capacity(44);
        buf.extend_from_slice(b"PSKY");
        buf.extend_from_slice(&(self.n_bits as u32).to_le_bytes());
        buf.extend_from_slice(&(self.tile as u32).to_le_bytes());
        buf.extend_from_slice(&self.seed);
        let mut f = std::fs::File::create(path).map_err(|source| Error::Write {
            path: path.to_path_buf(),
            source,
        })?;
        f.write_all(&buf).map_err(|source| Error::Write {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Reads a key file written by [`WatermarkKey::save`].
    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|source| Error::Read {
                path: path.to_path_buf(),
                source,
            })?;
        if buf.len() != 44 || &buf[0..4] != b"PSKY" {
            return Err(Error::KeyFormat(format!(
                "{}: not a key file (expected 44 bytes starting with PSKY)",
                path.display()
            )));
        }
        let n_bits = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
        let tile = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
        let seed: [u8; 32] = buf[12..44].try_into().unwrap();
        WatermarkKey::new(seed, n_bits, tile)
            .map_err(|e| Error::KeyFormat(format!("{}: {e}", path.display())))
    }
}

/// All carriers of one key, precomputed tile by tile.
#[derive(Debug, Clone)]
pub struct CarrierTable {
    tile: usize,
    /// `n_bits + 1` tiles of `tile * tile` entries in {-1, +1}, row-major.
    tiles: Vec<Vec<f64>>,
}

impl CarrierTable {
    /// Generates the carrier tiles for a key.
    ///
    /// Fails only on the hashed fallback path, when no tile satisfying the
    /// correlation bounds is found within the attempt budget (possible when
    /// the key requests far more carriers than the tile area supports).
    pub fn new(key: &WatermarkKey) -> Result<Self> {
        let t = key.tile;
        let n_carriers = key.n_bits + 1;
        let area = t * t;
        let tiles = if t.is_power_of_two() && n_carriers <= area - 1 {
            hadamard_tiles(key, n_carriers)
        } else {
            hashed_tiles(key, n_carriers)?
        };
        Ok(CarrierTable { tile: t, tiles })
    }

    pub fn tile(&self) -> usize {
        self.tile
    }

    pub fn n_carriers(&self) -> usize {
        self.tiles.len()
    }

    /// One tile as a row-major slice of ±1 entries.
    pub fn tile_pattern(&self, bit_index: usize) -> &[f64] {
        &self.tiles[bit_index]
    }

    /// Carrier value at an absolute pixel position.
    #[inline]
    pub fn value(&self, bit_index: usize, i: usize, j: usize) -> f64 {
        self.tiles[bit_index][(i % self.tile) * self.tile + (j % self.tile)]
    }
}

/// Carrier value in {-1, +1} for one key, carrier index, and position.
///
/// `bit_index` 0 is the synchronization/detection carrier, 1..=n_bits the
/// message-bit carriers. This rebuilds the key's carrier table on each call;
/// loops should build one [`CarrierTable`] instead.
///
/// # Panics
/// Panics if `bit_index > n_bits` or if tile generation fails (see
/// [`CarrierTable::new`]).
pub fn keyed_carrier(key: &WatermarkKey, bit_index: usize, i: usize, j: usize) -> i8 {
    assert!(
        bit_index <= key.n_bits,
        "bit_index {bit_index} out of range 0..={}",
        key.n_bits
    );
    let table = CarrierTable::new(key).expect("carrier generation failed");
    if table.value(bit_index, i, j) > 0.0 {
        1
    } else {
        -1
    }
}

/// Keyed Hadamard-row tiles: exact zero mean and exact pairwise orthogonality.
fn hadamard_tiles(key: &WatermarkKey, n_carriers: usize) -> Vec<Vec<f64>> {
    let area = key.tile * key.tile;

    // Keyed bijection of tile positions; scrambles the Walsh patterns so no
    // stripe structure survives for the host image to resonate with.
    let mut perm: Vec<usize> = (0..area).collect();
    perm.shuffle(&mut key.stream(b"carrier-perm"));

    // Keyed choice of distinct Hadamard rows. Row 0 (all ones) is excluded:
    // it is the only row with nonzero mean.
    let mut rows: Vec<usize> = (1..area).collect();
    let mut row_rng = key.stream(b"carrier-rows");
    rows.shuffle(&mut row_rng);
    rows.truncate(n_carriers);

    let mut sign_rng = key.stream(b"carrier-sign");
    rows.iter()
        .map(|&row| {
            let sign: f64 = if sign_rng.random::<bool>() { 1.0 } else { -1.0 };
            (0..area)
                .map(|p| {
                    let parity = (row & perm[p]).count_ones() & 1;
                    if parity == 0 { sign } else { -sign }
                })
                .collect()
        })
        .collect()
}

/// Counter-mode hashed tiles with rejection until the mean bound (all tiles)
/// and the cross-correlation bound (tile >= 8) hold.
fn hashed_tiles(key: &WatermarkKey, n_carriers: usize) -> Result<Vec<Vec<f64>>> {
    let t = key.tile;
    let area = t * t;
    let mut tiles: Vec<Vec<f64>> = Vec::with_capacity(n_carriers);
    for k in 0..n_carriers {
        let mut accepted = None;
        for counter in 0..MAX_TILE_ATTEMPTS {
            let candidate: Vec<f64> = (0..area)
                .map(|p| {
                    let (ti, tj) = (p / t, p % t);
                    let mut h = Sha256::new();
                    h.update(key.seed);
                    h.update(b"carrier-tile");
                    h.update((counter as u32).to_le_bytes());
                    h.update((k as u32).to_le_bytes());
                    h.update((ti as u32).to_le_bytes());
                    h.update((tj as u32).to_le_bytes());
                    if h.finalize()[0] & 1 == 1 {
                        1.0
                    } else {
                        -1.0
                    }
                })
                .collect();
            let mean = candidate.iter().sum::<f64>() / area as f64;
            if mean.abs() > MEAN_BOUND {
                continue;
            }
            let correlated = t >= 8
                && tiles.iter().any(|prev: &Vec<f64>| {
                    let dot: f64 = prev.iter().zip(&candidate).map(|(a, b)| a * b).sum();
                    (dot / area as f64).abs() > CROSS_BOUND
                });
            if correlated {
                continue;
            }
            accepted = Some(candidate);
            break;
        }
        tiles.push(accepted.ok_or(Error::CarrierGeneration {
            attempts: MAX_TILE_ATTEMPTS,
        })?);
    }
    Ok(tiles)
}
