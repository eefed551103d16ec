//! Window feature extraction: the raw feature vector for each g-cell,
//! assembled from its 3x3 window, plus hotspot labels from DRC boxes.
//!
//! Canonical vector layout (length `99 + 36*M + 27*V`):
//! 1. the 9 window g-cells in row-major order from offset (-1,-1) to
//!    (+1,+1), each contributing the 11 per-cell features listed in
//!    [`CELL_FEATURE_COUNT`] order;
//! 2. per metal layer, the 12 interior window border edges (6 vertical
//!    row-major, then 6 horizontal row-major), each as (C, L, C-L);
//! 3. per via layer, the 9 window g-cells row-major, each as (C, L, C-L).
//!
//! Window cells outside the layout contribute zeros; window edges outside
//! the grid contribute C = L = 0.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{DrcReport, LayoutGrid};

/// Scalar features per g-cell, in canonical order: center-x norm, center-y
/// norm, #cells fully within, #pins, #clock pins, #local nets, #pins in
/// local nets, #NDR pins, pin spacing, blockage area %, cell area %.
pub const CELL_FEATURE_COUNT: usize = 11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// One labeled g-cell: the feature vector of its window plus provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub design_id: String,
    pub col: usize,
    pub row: usize,
    pub features: FeatureVector,
    pub label: bool,
}

/// The 11 per-cell scalars for every g-cell of a design, row-major.
fn design_cell_stats(g: &LayoutGrid) -> Vec<[f64; CELL_FEATURE_COUNT]> {
    let n = g.nx * g.ny;
    let width = g.width();
    let height = g.height();

    // Pins bucketed by owning g-cell (point membership).
    let mut pin_cell: Vec<Option<usize>> = Vec::with_capacity(g.pins.len());
    let mut pins_in: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (pi, p) in g.pins.iter().enumerate() {
        let cell = g.gcell_of_point(p.x, p.y).map(|(c, r)| r * g.nx + c);
        if let Some(idx) = cell {
            pins_in[idx].push(pi);
        }
        pin_cell.push(cell);
    }

    // A net is local to a g-cell when every one of its pins lies there.
    #[derive(Clone, Copy, PartialEq)]
    enum Locality {
        Unset,
        Local(usize),
        Spread,
    }
    let net_index: HashMap<&str, usize> =
        g.nets.iter().enumerate().map(|(i, nt)| (nt.id.as_str(), i)).collect();
    let mut locality = vec![Locality::Unset; g.nets.len()];
    for (pi, p) in g.pins.iter().enumerate() {
        let ni = net_index[p.net.as_str()];
        locality[ni] = match (locality[ni], pin_cell[pi]) {
            (_, None) => Locality::Spread,
            (Locality::Unset, Some(c)) => Locality::Local(c),
            (Locality::Local(prev), Some(c)) if prev == c => Locality::Local(c),
            _ => Locality::Spread,
        };
    }
    let mut local_nets = vec![0.0f64; n];
    let mut local_net_pins = vec![0.0f64; n];
    for (ni, nt) in g.nets.iter().enumerate() {
        if let Locality::Local(cell) = locality[ni] {
            local_nets[cell] += 1.0;
            local_net_pins[cell] += nt.pins.len() as f64;
        }
    }

    // Std cells counted in the g-cell containing their lower-left corner,
    // if fully contained there (boundary-inclusive).
    let mut cells_within = vec![0.0f64; n];
    for c in &g.cells {
        if let Some((col, row)) = g.gcell_of_point(c.rect.x, c.rect.y) {
            if c.rect.contained_in(&g.gcell_rect(col, row)) {
                cells_within[row * g.nx + col] += 1.0;
            }
        }
    }

    let ndr_nets: Vec<bool> = g.nets.iter().map(|nt| nt.has_ndr).collect();

    (0..n)
        .map(|idx| {
            let (col, row) = (idx % g.nx, idx / g.nx);
            let rect = g.gcell_rect(col, row);
            let pins = &pins_in[idx];

            let mut clock = 0.0;
            let mut ndr = 0.0;
            for &pi in pins {
                let p = &g.pins[pi];
                if p.is_clock {
                    clock += 1.0;
                }
                if ndr_nets[net_index[p.net.as_str()]] {
                    ndr += 1.0;
                }
            }

            // Mean pairwise Manhattan distance; 0 with fewer than 2 pins.
            let spacing = if pins.len() < 2 {
                0.0
            } else {
                let mut total = 0.0;
                for (a, &pa) in pins.iter().enumerate() {
                    for &pb in &pins[a + 1..] {
                        let (p, q) = (&g.pins[pa], &g.pins[pb]);
                        total += (p.x - q.x).abs() + (p.y - q.y).abs();
                    }
                }
                total / (pins.len() * (pins.len() - 1) / 2) as f64
            };

            let cell_clips: Vec<_> = g
                .cells
                .iter()
                .filter_map(|c| c.rect.intersect(&rect))
                .collect();
            let cell_area = crate::geom::union_area(&cell_clips) / rect.area();

            [
                rect.center_x() / width,
                rect.center_y() / height,
                cells_within[idx],
                pins.len() as f64,
                clock,
                local_nets[idx],
                local_net_pins[idx],
                ndr,
                spacing,
                g.blockage_coverage(col, row).min(1.0),
                cell_area.min(1.0),
            ]
        })
        .collect()
}

fn assemble(
    g: &LayoutGrid,
    stats: &[[f64; CELL_FEATURE_COUNT]],
    col: usize,
    row: usize,
) -> FeatureVector {
    let mut v = Vec::with_capacity(g.layers.feature_len());
    let (c, r) = (col as isize, row as isize);

    for dy in -1..=1isize {
        for dx in -1..=1isize {
            let (wc, wr) = (c + dx, r + dy);
            if wc >= 0 && wr >= 0 && (wc as usize) < g.nx && (wr as usize) < g.ny {
                v.extend_from_slice(&stats[wr as usize * g.nx + wc as usize]);
            } else {
                v.extend_from_slice(&[0.0; CELL_FEATURE_COUNT]);
            }
        }
    }

    for layer in 0..g.layers.metal {
        // 6 interior vertical borders: 2 per window row, bottom row first.
        for wr in 0..3 {
            for wc in 0..2 {
                let cl = g.metal_vertical(layer, c - 1 + wc, r - 1 + wr);
                v.extend_from_slice(&[
                    cl.cap as f64,
                    cl.load as f64,
                    cl.cap as f64 - cl.load as f64,
                ]);
            }
        }
        // 6 interior horizontal borders: 3 per border row, lower first.
        for wb in 0..2 {
            for wc in 0..3 {
                let cl = g.metal_horizontal(layer, c - 1 + wc, r - 1 + wb);
                v.extend_from_slice(&[
                    cl.cap as f64,
                    cl.load as f64,
                    cl.cap as f64 - cl.load as f64,
                ]);
            }
        }
    }

    for layer in 0..g.layers.via {
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                let cl = g.via_at(layer, c + dx, r + dy);
                v.extend_from_slice(&[
                    cl.cap as f64,
                    cl.load as f64,
                    cl.cap as f64 - cl.load as f64,
                ]);
            }
        }
    }

    debug_assert_eq!(v.len(), g.layers.feature_len());
    FeatureVector { values: v }
}

/// Raw feature vector for one g-cell. Computes per-cell statistics for the
/// whole design first; prefer [`extract_design`] when extracting many cells.
pub fn extract_features(g: &LayoutGrid, gcell: (usize, usize)) -> Result<FeatureVector> {
    let (col, row) = gcell;
    if col >= g.nx || row >= g.ny {
        return Err(Error::validation(
            format!("gcell ({col}, {row})"),
            format!("outside {}x{} grid", g.nx, g.ny),
        ));
    }
    let stats = design_cell_stats(g);
    Ok(assemble(g, &stats, col, row))
}

/// Hotspot labels per g-cell (row-major): true iff the g-cell rectangle
/// intersects some DRC box with strictly positive area.
pub fn label_gcells(g: &LayoutGrid, drc: &DrcReport) -> Vec<bool> {
    let mut labels = vec![false; g.nx * g.ny];
    for b in &drc.boxes {
        let c_lo = ((b.x / g.gcell_w).floor() as isize).max(0);
        let c_hi = ((b.x1() / g.gcell_w).ceil() as isize).min(g.nx as isize) - 1;
        let r_lo = ((b.y / g.gcell_h).floor() as isize).max(0);
        let r_hi = ((b.y1() / g.gcell_h).ceil() as isize).min(g.ny as isize) - 1;
        for row in r_lo..=r_hi {
            for col in c_lo..=c_hi {
                if col < 0 || row < 0 {
                    continue;
                }
                let (col, row) = (col as usize, row as usize);
                if b.intersect(&g.gcell_rect(col, row)).is_some() {
                    labels[row * g.nx + col] = true;
                }
            }
        }
    }
    labels
}

/// All samples of a design in row-major g-cell order, excluding g-cells
/// entirely covered by blockages (macro exclusion).
pub fn extract_design(g: &LayoutGrid, drc: &DrcReport, design_id: &str) -> Vec<Sample> {
    let stats = design_cell_stats(g);
    let labels = label_gcells(g, drc);
    let kept: Vec<usize> = (0..g.nx * g.ny)
        .filter(|&idx| !g.gcell_fully_blocked(idx % g.nx, idx / g.nx))
        .collect();
    kept.par_iter()
        .map(|&idx| {
            let (col, row) = (idx % g.nx, idx / g.nx);
            Sample {
                design_id: design_id.to_string(),
                col,
                row,
                features: assemble(g, &stats, col, row),
                label: labels[idx],
            }
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct SampleDoc {
    design: String,
    col: usize,
    row: usize,
    label: bool,
    features: Vec<f64>,
}

/// Write samples as JSON-lines, one object per sample.
pub fn write_samples_jsonl<W: Write>(samples: &[Sample], out: &mut W) -> Result<()> {
    for s in samples {
        let doc = SampleDoc {
            design: s.design_id.clone(),
            col: s.col,
            row: s.row,
            label: s.label,
            features: s.features.values.clone(),
        };
        serde_json::to_writer(&mut *out, &doc).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Parse a JSON-lines sample file; all vectors must share one length.
pub fn parse_samples_jsonl(bytes: &[u8]) -> Result<Vec<Sample>> {
    let mut samples = Vec::new();
    let mut dim: Option<usize> = None;
    for (lineno, line) in bytes.split(|&b| b == b'\n').enumerate() {
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let mut de = serde_json::Deserializer::from_slice(line);
        let doc: SampleDoc = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            Error::Schema {
                path: format!("line {}: {}", lineno + 1, e.path()),
                message: e.inner().to_string(),
            }
        })?;
        match dim {
            None => dim = Some(doc.features.len()),
            Some(d) if d != doc.features.len() => {
                return Err(Error::Dimension(format!(
                    "line {}: feature length {} != {}",
                    lineno + 1,
                    doc.features.len(),
                    d
                )))
            }
            _ => {}
        }
        samples.push(Sample {
            design_id: doc.design,
            col: doc.col,
            row: doc.row,
            features: FeatureVector { values: doc.features },
            label: doc.label,
        });
    }
    Ok(samples)
}

/// Write samples as CSV with header `f000,...,fNNN,label,design,col,row`.
pub fn write_samples_csv<W: Write>(samples: &[Sample], out: &mut W) -> Result<()> {
    let dim = samples.first().map_or(0, |s| s.features.len());
    let header: Vec<String> = (0..dim)
        .map(|i| format!("f{i:03}"))
        .chain(["label", "design", "col", "row"].map(String::from))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for s in samples {
        for v in &s.features.values {
            write!(out, "{v},")?;
        }
        writeln!(
            out,
            "{},{},{},{}",
            u8::from(s.label),
            s.design_id,
            s.col,
            s.row
        )?;
    }
    Ok(())
}
