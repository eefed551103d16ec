//! Seeded synthetic layout generator with planted DRC hotspots.
//!
//! Stands in for a commercial placement + global-routing flow: it emits
//! [`LayoutGrid`]s whose congestion and pin density follow a smooth random
//! field, plants DRC boxes where a latent score (congestion overflow plus
//! pin density plus noise) is largest, and optionally flips a fraction of
//! the planted labels so the task stays non-degenerate. Everything is a
//! pure function of the config, so equal configs produce byte-identical
//! layout documents.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::geom::Rect;
use crate::layout::{
    CapLoad, CongestionMap, DrcReport, LayerConfig, LayoutGrid, MetalLayer, Net, Pin, StdCell,
    ViaLayer,
};
use crate::seeding::{derive_rng, derive_seed};

/// Weight of the summed congestion overflow in the latent hotspot score.
const ALPHA_OVERFLOW: f64 = 1.0;
/// Weight of the g-cell pin count in the latent hotspot score.
const BETA_PINS: f64 = 0.5;
/// Standard deviation of the Gaussian perturbation added to the latent
/// score. Keeps the planted decision boundary fuzzy so that no model can
/// reach a perfect ranking on generated data.
const LATENT_NOISE_STD: f64 = 3.0;
/// Probability of grouping another batch of same-g-cell pins into a local
/// net; remaining pins join cross-g-cell nets.
const LOCAL_NET_PROB: f64 = 0.7;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub nx: usize,
    pub ny: usize,
    pub gcell_w: f64,
    pub gcell_h: f64,
    pub layers: LayerConfig,
    /// Mean number of standard cells per non-blocked g-cell (scaled by the
    /// local density field).
    pub cells_per_gcell_mean: f64,
    pub pins_per_cell_mean: f64,
    pub clock_pin_fraction: f64,
    pub ndr_net_fraction: f64,
    /// Fraction of g-cells covered by macro blockages.
    pub blockage_fraction: f64,
    pub congestion_base_capacity: u32,
    /// Fraction of eligible (non-macro) g-cells planted as hotspots.
    pub target_hotspot_rate: f64,
    /// Fraction of planted hotspots whose label is flipped, balanced by an
    /// equal count of flipped non-hotspots so the positive count (and hence
    /// the empirical hotspot rate) is preserved.
    pub label_noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            nx: 32,
            ny: 32,
            gcell_w: 10.0,
            gcell_h: 10.0,
            layers: LayerConfig { metal: 5, via: 4 },
            cells_per_gcell_mean: 4.0,
            pins_per_cell_mean: 2.0,
            clock_pin_fraction: 0.08,
            ndr_net_fraction: 0.05,
            blockage_fraction: 0.06,
            congestion_base_capacity: 10,
            target_hotspot_rate: 0.03,
            label_noise: 0.0,
            seed: 1,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::Config("nx and ny must be >= 1".into()));
        }
        if !(self.gcell_w > 0.0 && self.gcell_w.is_finite())
            || !(self.gcell_h > 0.0 && self.gcell_h.is_finite())
        {
            return Err(Error::Config("g-cell dimensions must be positive".into()));
        }
        if self.layers.metal == 0 || self.layers.via == 0 {
            return Err(Error::Config("need >= 1 metal and via layer".into()));
        }
        if !(self.cells_per_gcell_mean.is_finite() && self.cells_per_gcell_mean > 0.0)
            || !(self.pins_per_cell_mean.is_finite() && self.pins_per_cell_mean > 0.0)
        {
            return Err(Error::Config("density means must be positive".into()));
        }
        for (name, v) in [
            ("clock_pin_fraction", self.clock_pin_fraction),
            ("ndr_net_fraction", self.ndr_net_fraction),
            ("blockage_fraction", self.blockage_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0,1], got {v}")));
            }
        }
        if !(self.target_hotspot_rate > 0.0 && self.target_hotspot_rate < 1.0) {
            return Err(Error::Config("target_hotspot_rate must be in (0,1)".into()));
        }
        if !(0.0..1.0).contains(&self.label_noise) {
            return Err(Error::Config("label_noise must be in [0,1)".into()));
        }
        if self.congestion_base_capacity == 0 {
            return Err(Error::Config("congestion_base_capacity must be >= 1".into()));
        }
        Ok(())
    }
}

/// One design of a generated suite.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedDesign {
    pub name: String,
    pub grid: LayoutGrid,
    pub drc: DrcReport,
}

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> u32 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("positive lambda").sample(rng) as u32
}

/// Smooth positive density field over the grid, normalized to mean 1.
fn density_field(nx: usize, ny: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = nx * ny;
    let n_bumps = (n / 96).clamp(3, 24);
    let mut field = vec![0.25f64; n];
    let sigma_hi = (nx.max(ny) as f64 / 4.0).max(2.5);
    for _ in 0..n_bumps {
        let cx = rng.gen_range(0.0..nx as f64);
        let cy = rng.gen_range(0.0..ny as f64);
        let sigma = rng.gen_range(1.5..sigma_hi);
        let amp = rng.gen_range(0.5..2.0);
        let inv = 1.0 / (2.0 * sigma * sigma);
        for row in 0..ny {
            for col in 0..nx {
                let dx = col as f64 + 0.5 - cx;
                let dy = row as f64 + 0.5 - cy;
                field[row * nx + col] += amp * (-(dx * dx + dy * dy) * inv).exp();
            }
        }
    }
    let mean = field.iter().sum::<f64>() / n as f64;
    for v in &mut field {
        *v /= mean;
    }
    field
}

/// Total congestion overflow (load above capacity) incident to one g-cell:
/// its four border edges on every metal layer plus its via stacks.
fn overflow_sum(grid: &LayoutGrid, col: usize, row: usize) -> f64 {
    let (i, j) = (col as isize, row as isize);
    let mut total = 0u32;
    for l in 0..grid.layers.metal {
        total += grid.metal_vertical(l, i - 1, j).overflow();
        total += grid.metal_vertical(l, i, j).overflow();
        total += grid.metal_horizontal(l, i, j - 1).overflow();
        total += grid.metal_horizontal(l, i, j).overflow();
    }
    for l in 0..grid.layers.via {
        total += grid.via_at(l, i, j).overflow();
    }
    total as f64
}

/// Generate one layout and its DRC report. Deterministic in `cfg`.
pub fn generate(cfg: &SynthConfig) -> Result<(LayoutGrid, DrcReport)> {
    cfg.validate()?;
    let (nx, ny) = (cfg.nx, cfg.ny);
    let (gw, gh) = (cfg.gcell_w, cfg.gcell_h);
    let n_gcells = nx * ny;
    let width = nx as f64 * gw;
    let height = ny as f64 * gh;

    // Macro blockages: g-cell-aligned, non-overlapping rectangles placed
    // until the requested fraction of g-cells is covered.
    let mut covered = vec![false; n_gcells];
    let mut blockages: Vec<Rect> = Vec::new();
    let target_covered = (cfg.blockage_fraction * n_gcells as f64).round() as usize;
    if target_covered > 0 {
        let mut rng = derive_rng(cfg.seed, "synth/macros", 0);
        let mut covered_count = 0usize;
        let max_attempts = 60 * target_covered + 200;
        let mut attempts = 0usize;
        while covered_count < target_covered && attempts < max_attempts {
            attempts += 1;
            let sw = rng.gen_range(1..=nx.min(4));
            let sh = rng.gen_range(1..=ny.min(4));
            let col = rng.gen_range(0..=nx - sw);
            let row = rng.gen_range(0..=ny - sh);
            let overlaps = (0..sh)
                .any(|dr| (0..sw).any(|dc| covered[(row + dr) * nx + (col + dc)]));
            if overlaps {
                continue;
            }
            for dr in 0..sh {
                for dc in 0..sw {
                    covered[(row + dr) * nx + (col + dc)] = true;
                }
            }
            covered_count += sw * sh;
            blockages.push(Rect::new(
                col as f64 * gw,
                row as f64 * gh,
                sw as f64 * gw,
                sh as f64 * gh,
            ));
        }
    }
    let eligible: Vec<usize> = (0..n_gcells).filter(|&i| !covered[i]).collect();
    if eligible.is_empty() {
        return Err(Error::validation(
            "synth",
            "macro blockages cover every g-cell; nothing to generate",
        ));
    }

    let mut rng_density = derive_rng(cfg.seed, "synth/density", 0);
    let density = density_field(nx, ny, &mut rng_density);

    // Standard cells and their pins, g-cell by g-cell in row-major order.
    let mut rng_cells = derive_rng(cfg.seed, "synth/cells", 0);
    let mut rng_pins = derive_rng(cfg.seed, "synth/pins", 0);
    let mut cells: Vec<StdCell> = Vec::new();
    // Pin positions first; net ids are assigned after grouping.
    let mut pin_geom: Vec<(Option<String>, f64, f64, bool)> = Vec::new();
    for idx in 0..n_gcells {
        if covered[idx] {
            continue;
        }
        let (col, row) = (idx % nx, idx / nx);
        let n_cells = poisson(&mut rng_cells, cfg.cells_per_gcell_mean * density[idx]);
        for _ in 0..n_cells {
            let w = gw * rng_cells.gen_range(0.15..0.4);
            let h = gh * rng_cells.gen_range(0.15..0.4);
            let cx = (col as f64 + rng_cells.gen::<f64>()) * gw;
            let cy = (row as f64 + rng_cells.gen::<f64>()) * gh;
            let x = (cx - w / 2.0).clamp(0.0, width - w);
            let y = (cy - h / 2.0).clamp(0.0, height - h);
            let cell_id = format!("c{}", cells.len());
            let rect = Rect::new(x, y, w, h);
            let n_pins = 1 + poisson(&mut rng_pins, (cfg.pins_per_cell_mean - 1.0).max(0.0));
            for _ in 0..n_pins {
                let px = x + rng_pins.gen::<f64>() * w;
                let py = y + rng_pins.gen::<f64>() * h;
                let clock = rng_pins.gen_bool(cfg.clock_pin_fraction);
                pin_geom.push((Some(cell_id.clone()), px, py, clock));
            }
            cells.push(StdCell { id: cell_id, rect });
        }
    }

    // Bucket pins by owning g-cell (point membership, lower-left inclusive).
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); n_gcells];
    for (pi, &(_, px, py, _)) in pin_geom.iter().enumerate() {
        let col = ((px / gw).floor() as usize).min(nx - 1);
        let row = ((py / gh).floor() as usize).min(ny - 1);
        buckets[row * nx + col].push(pi);
    }

    // Nets: some local (all pins in one g-cell), the rest grouped from a
    // shuffled cross-g-cell pool.
    let mut rng_nets = derive_rng(cfg.seed, "synth/nets", 0);
    let mut net_pins: Vec<Vec<usize>> = Vec::new();
    let mut pool: Vec<usize> = Vec::new();
    for bucket in &buckets {
        let mut start = 0usize;
        while bucket.len() - start >= 2 && rng_nets.gen_bool(LOCAL_NET_PROB) {
            let sz = rng_nets.gen_range(2..=(bucket.len() - start).min(4));
            net_pins.push(bucket[start..start + sz].to_vec());
            start += sz;
        }
        pool.extend_from_slice(&bucket[start..]);
    }
    pool.shuffle(&mut rng_nets);
    let mut i = 0usize;
    while i < pool.len() {
        let sz = rng_nets.gen_range(2..=5usize).min(pool.len() - i);
        net_pins.push(pool[i..i + sz].to_vec());
        i += sz;
    }
    let mut pin_net = vec![usize::MAX; pin_geom.len()];
    let nets: Vec<Net> = net_pins
        .iter()
        .enumerate()
        .map(|(ni, members)| {
            for &pi in members {
                pin_net[pi] = ni;
            }
            Net {
                id: format!("n{ni}"),
                pins: members.iter().map(|&pi| format!("p{pi}")).collect(),
                has_ndr: rng_nets.gen_bool(cfg.ndr_net_fraction),
            }
        })
        .collect();
    let pins: Vec<Pin> = pin_geom
        .into_iter()
        .enumerate()
        .map(|(pi, (cell, x, y, is_clock))| Pin {
            id: format!("p{pi}"),
            cell,
            net: format!("n{}", pin_net[pi]),
            x,
            y,
            is_clock,
        })
        .collect();

    // Congestion: alternating directional metal layers (even layers route
    // horizontally, i.e. carry capacity on vertical borders), loads drawn
    // Poisson with rate proportional to local density.
    let mut rng_cong = derive_rng(cfg.seed, "synth/congestion", 0);
    let base = cfg.congestion_base_capacity;
    let mut metal = Vec::with_capacity(cfg.layers.metal);
    for layer in 0..cfg.layers.metal {
        let util = rng_cong.gen_range(0.55..0.85);
        let (v_cap, h_cap) = if layer % 2 == 0 { (base, 0) } else { (0, base) };
        let mut vertical = Vec::with_capacity((nx - 1) * ny);
        for j in 0..ny {
            for i in 0..nx - 1 {
                let d = (density[j * nx + i] + density[j * nx + i + 1]) / 2.0;
                let load = poisson(&mut rng_cong, v_cap as f64 * util * d);
                vertical.push(CapLoad { cap: v_cap, load });
            }
        }
        let mut horizontal = Vec::with_capacity(nx * (ny - 1));
        for j in 0..ny.saturating_sub(1) {
            for i in 0..nx {
                let d = (density[j * nx + i] + density[(j + 1) * nx + i]) / 2.0;
                let load = poisson(&mut rng_cong, h_cap as f64 * util * d);
                horizontal.push(CapLoad { cap: h_cap, load });
            }
        }
        metal.push(MetalLayer { vertical, horizontal });
    }
    let mut via = Vec::with_capacity(cfg.layers.via);
    for _ in 0..cfg.layers.via {
        let util = rng_cong.gen_range(0.4..0.7);
        let cells_cl = (0..n_gcells)
            .map(|idx| CapLoad {
                cap: base,
                load: poisson(&mut rng_cong, base as f64 * util * density[idx]),
            })
            .collect();
        via.push(ViaLayer { cells: cells_cl });
    }

    let grid = LayoutGrid {
        nx,
        ny,
        gcell_w: gw,
        gcell_h: gh,
        layers: cfg.layers,
        cells,
        pins,
        nets,
        blockages,
        congestion: CongestionMap { metal, via },
    };

    // Latent hotspot score per eligible g-cell; plant the top quantile.
    let mut rng_latent = derive_rng(cfg.seed, "synth/latent", 0);
    let noise_dist = Normal::new(0.0, LATENT_NOISE_STD).expect("valid normal");
    let noise: Vec<f64> = (0..n_gcells).map(|_| noise_dist.sample(&mut rng_latent)).collect();
    let mut scored: Vec<(f64, usize)> = eligible
        .iter()
        .map(|&idx| {
            let (col, row) = (idx % nx, idx / nx);
            let s = ALPHA_OVERFLOW * overflow_sum(&grid, col, row)
                + BETA_PINS * buckets[idx].len() as f64
                + noise[idx];
            (s, idx)
        })
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let k = ((cfg.target_hotspot_rate * eligible.len() as f64).round() as usize)
        .min(eligible.len());
    let mut planted: Vec<usize> = scored[..k].iter().map(|&(_, idx)| idx).collect();
    planted.sort_unstable();

    // Balanced label flips: remove a fraction of planted hotspots and plant
    // an equal count elsewhere, preserving the positive count.
    let k_flip = (cfg.label_noise * k as f64).round() as usize;
    if k_flip > 0 {
        let mut rng_flip = derive_rng(cfg.seed, "synth/flip", 0);
        let planted_set: HashSet<usize> = planted.iter().copied().collect();
        let others: Vec<usize> = eligible
            .iter()
            .copied()
            .filter(|idx| !planted_set.contains(idx))
            .collect();
        let k_flip = k_flip.min(others.len());
        let removed: HashSet<usize> = planted
            .choose_multiple(&mut rng_flip, k_flip)
            .copied()
            .collect();
        let added: Vec<usize> = others
            .choose_multiple(&mut rng_flip, k_flip)
            .copied()
            .collect();
        planted.retain(|idx| !removed.contains(idx));
        planted.extend(added);
        planted.sort_unstable();
    }

    // One DRC box strictly inside each planted g-cell.
    let mut rng_drc = derive_rng(cfg.seed, "synth/drc", 0);
    let boxes: Vec<Rect> = planted
        .iter()
        .map(|&idx| {
            let (col, row) = (idx % nx, idx / nx);
            let fx = rng_drc.gen_range(0.1..0.45);
            let fy = rng_drc.gen_range(0.1..0.45);
            let fw = rng_drc.gen_range(0.1..(0.9 - fx));
            let fh = rng_drc.gen_range(0.1..(0.9 - fy));
            Rect::new(
                (col as f64 + fx) * gw,
                (row as f64 + fy) * gh,
                fw * gw,
                fh * gh,
            )
        })
        .collect();

    Ok((grid, DrcReport { boxes }))
}

/// Generate `n_designs` designs with jittered densities and stable names
/// `synth_00`, `synth_01`, ... Deterministic in `seed`; each design depends
/// only on its own index, so growing the suite never changes earlier designs.
pub fn generate_suite(
    base: &SynthConfig,
    n_designs: usize,
    seed: u64,
) -> Result<Vec<NamedDesign>> {
    if n_designs == 0 {
        return Err(Error::Config("n_designs must be >= 1".into()));
    }
    (0..n_designs)
        .map(|i| {
            let cfg = suite_design_config(base, i, seed);
            let (grid, drc) = generate(&cfg)?;
            Ok(NamedDesign {
                name: format!("synth_{i:02}"),
                grid,
                drc,
            })
        })
        .collect()
}

/// Config for design `i` of a suite: base densities jittered by a per-design
/// derived stream, seed derived from (seed, i).
pub fn suite_design_config(base: &SynthConfig, i: usize, seed: u64) -> SynthConfig {
    let mut rng = derive_rng(seed, "suite/jitter", i as u64);
    let mut cfg = base.clone();
    cfg.cells_per_gcell_mean *= rng.gen_range(0.8..1.2);
    cfg.pins_per_cell_mean *= rng.gen_range(0.9..1.1);
    cfg.seed = derive_seed(seed, "suite/design", i as u64);
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{parse_layout, write_layout};

    fn small_cfg() -> SynthConfig {
        SynthConfig {
            nx: 8,
            ny: 8,
            seed: 7,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small_cfg();
        let (g1, d1) = generate(&cfg).unwrap();
        let (g2, d2) = generate(&cfg).unwrap();
        assert_eq!(g1, g2);
        assert_eq!(d1, d2);
        assert_eq!(write_layout(&g1), write_layout(&g2));
    }

    #[test]
    fn roundtrip_through_interchange_format() {
        let (grid, _) = generate(&small_cfg()).unwrap();
        let reparsed = parse_layout(&write_layout(&grid)).unwrap();
        assert_eq!(reparsed, grid);
    }

    #[test]
    fn planted_rate_matches_target() {
        let cfg = SynthConfig {
            nx: 100,
            ny: 100,
            target_hotspot_rate: 0.02,
            seed: 11,
            ..SynthConfig::default()
        };
        let (grid, drc) = generate(&cfg).unwrap();
        let eligible = (0..cfg.ny)
            .flat_map(|r| (0..cfg.nx).map(move |c| (c, r)))
            .filter(|&(c, r)| !grid.gcell_fully_blocked(c, r))
            .count();
        let rate = drc.boxes.len() as f64 / eligible as f64;
        assert!((rate - 0.02).abs() <= 0.005, "rate {rate}");
        // Exactly one box per planted cell, strictly inside it.
        let mut cells_hit = HashSet::new();
        for b in &drc.boxes {
            let cell = grid.gcell_of_point(b.x, b.y).unwrap();
            assert_eq!(grid.gcell_of_point(b.x1(), b.y1()).unwrap(), cell);
            let r = grid.gcell_rect(cell.0, cell.1);
            assert!(b.x > r.x && b.y > r.y && b.x1() < r.x1() && b.y1() < r.y1());
            assert!(cells_hit.insert(cell));
        }
    }

    #[test]
    fn zero_blockage_fraction_means_no_blockages() {
        let cfg = SynthConfig {
            blockage_fraction: 0.0,
            ..small_cfg()
        };
        let (grid, _) = generate(&cfg).unwrap();
        assert!(grid.blockages.is_empty());
    }

    #[test]
    fn label_noise_preserves_positive_count() {
        let clean = SynthConfig {
            nx: 24,
            ny: 24,
            target_hotspot_rate: 0.05,
            seed: 3,
            ..SynthConfig::default()
        };
        let noisy = SynthConfig {
            label_noise: 0.3,
            ..clean.clone()
        };
        let (_, drc_clean) = generate(&clean).unwrap();
        let (_, drc_noisy) = generate(&noisy).unwrap();
        assert_eq!(drc_clean.boxes.len(), drc_noisy.boxes.len());
        assert_ne!(drc_clean.boxes, drc_noisy.boxes);
    }

    #[test]
    fn fully_blocked_layout_is_rejected() {
        let cfg = SynthConfig {
            nx: 2,
            ny: 2,
            blockage_fraction: 1.0,
            ..SynthConfig::default()
        };
        let err = generate(&cfg).unwrap_err();
        assert!(matches!(err, Error::Validation { .. }), "{err}");
    }

    #[test]
    fn suite_is_stable_and_named() {
        let base = small_cfg();
        let suite = generate_suite(&base, 3, 42).unwrap();
        assert_eq!(
            suite.iter().map(|d| d.name.as_str()).collect::<Vec<_>>(),
            ["synth_00", "synth_01", "synth_02"]
        );
        // Designs depend only on their index, not on suite size.
        let single = generate_suite(&base, 1, 42).unwrap();
        assert_eq!(single[0], suite[0]);
        // Jitter gives distinct designs.
        assert_ne!(suite[0].grid, suite[1].grid);
        // Repeat run is identical.
        let again = generate_suite(&base, 3, 42).unwrap();
        assert_eq!(again, suite);
    }
}
