//! G-cell grid data model and its JSON interchange format.
//!
//! A [`LayoutGrid`] is a snapshot of a placed and globally routed design:
//! standard cells, pins, nets, routing blockages, and per-layer congestion
//! (capacity/load per g-cell border edge on metal layers, per g-cell on via
//! layers). The JSON format is canonical — keys sorted, arrays in a fixed
//! order — so writing the same grid twice yields byte-identical documents.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Rect;

/// Number of metal and via layers carried by the congestion map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerConfig {
    pub metal: usize,
    pub via: usize,
}

impl LayerConfig {
    /// Length of the raw feature vector extracted for this layer config:
    /// 9 window cells x 11 scalar features, plus (C, L, C-L) for 12 window
    /// border edges per metal layer and 9 window cells per via layer.
    pub fn feature_len(&self) -> usize {
        99 + 36 * self.metal + 27 * self.via
    }
}

/// Standard cell instance with its placed bounding rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct StdCell {
    pub id: String,
    pub rect: Rect,
}

/// Pin at a point location. `cell` is `None` for I/O pins.
#[derive(Debug, Clone, PartialEq)]
pub struct Pin {
    pub id: String,
    pub cell: Option<String>,
    pub net: String,
    pub x: f64,
    pub y: f64,
    pub is_clock: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Net {
    pub id: String,
    pub pins: Vec<String>,
    pub has_ndr: bool,
}

/// Capacity/load pair for one congestion edge or via g-cell.
/// Load may exceed capacity; overflow is legal data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapLoad {
    pub cap: u32,
    pub load: u32,
}

impl CapLoad {
    pub const ZERO: CapLoad = CapLoad { cap: 0, load: 0 };

    pub fn overflow(&self) -> u32 {
        self.load.saturating_sub(self.cap)
    }
}

/// Congestion for one metal layer. Vertical edges separate horizontally
/// adjacent g-cells ((nx-1) x ny of them); horizontal edges separate
/// vertically adjacent g-cells (nx x (ny-1)). Both stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MetalLayer {
    pub vertical: Vec<CapLoad>,
    pub horizontal: Vec<CapLoad>,
}

/// Congestion for one via layer: one entry per g-cell, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ViaLayer {
    pub cells: Vec<CapLoad>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CongestionMap {
    pub metal: Vec<MetalLayer>,
    pub via: Vec<ViaLayer>,
}

/// Full placed-and-globally-routed design snapshot on a g-cell grid.
/// Immutable after parse; share by reference for read-only extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutGrid {
    pub nx: usize,
    pub ny: usize,
    pub gcell_w: f64,
    pub gcell_h: f64,
    pub layers: LayerConfig,
    pub cells: Vec<StdCell>,
    pub pins: Vec<Pin>,
    pub nets: Vec<Net>,
    pub blockages: Vec<Rect>,
    pub congestion: CongestionMap,
}

impl LayoutGrid {
    pub fn width(&self) -> f64 {
        self.nx as f64 * self.gcell_w
    }

    pub fn height(&self) -> f64 {
        self.ny as f64 * self.gcell_h
    }

    pub fn bbox(&self) -> Rect {
        Rect::new(0.0, 0.0, self.width(), self.height())
    }

    /// Rectangle of g-cell (col, row); origin at the lower-left of the layout.
    pub fn gcell_rect(&self, col: usize, row: usize) -> Rect {
        Rect::new(
            col as f64 * self.gcell_w,
            row as f64 * self.gcell_h,
            self.gcell_w,
            self.gcell_h,
        )
    }

    /// G-cell owning a point. Cells include their lower and left borders;
    /// points on the layout's top/right boundary belong to the last cell.
    pub fn gcell_of_point(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if !(0.0..=self.width()).contains(&x) || !(0.0..=self.height()).contains(&y) {
            return None;
        }
        let col = ((x / self.gcell_w).floor() as usize).min(self.nx - 1);
        let row = ((y / self.gcell_h).floor() as usize).min(self.ny - 1);
        Some((col, row))
    }

    /// Vertical border edge between g-cells (i, j) and (i+1, j) on a metal
    /// layer; zero if the edge lies outside the grid.
    pub fn metal_vertical(&self, layer: usize, i: isize, j: isize) -> CapLoad {
        if i < 0 || j < 0 || i as usize >= self.nx.saturating_sub(1) || j as usize >= self.ny {
            return CapLoad::ZERO;
        }
        self.congestion.metal[layer].vertical[j as usize * (self.nx - 1) + i as usize]
    }

    /// Horizontal border edge between g-cells (i, j) and (i, j+1).
    pub fn metal_horizontal(&self, layer: usize, i: isize, j: isize) -> CapLoad {
        if i < 0 || j < 0 || i as usize >= self.nx || j as usize >= self.ny.saturating_sub(1) {
            return CapLoad::ZERO;
        }
        self.congestion.metal[layer].horizontal[j as usize * self.nx + i as usize]
    }

    /// Via capacity/load of g-cell (i, j); zero outside the grid.
    pub fn via_at(&self, layer: usize, i: isize, j: isize) -> CapLoad {
        if i < 0 || j < 0 || i as usize >= self.nx || j as usize >= self.ny {
            return CapLoad::ZERO;
        }
        self.congestion.via[layer].cells[j as usize * self.nx + i as usize]
    }

    /// Fraction of a g-cell's area covered by the union of blockage rects.
    pub fn blockage_coverage(&self, col: usize, row: usize) -> f64 {
        let cell = self.gcell_rect(col, row);
        let clipped: Vec<Rect> = self
            .blockages
            .iter()
            .filter_map(|b| b.intersect(&cell))
            .collect();
        crate::geom::union_area(&clipped) / cell.area()
    }

    /// True when blockages cover the entire g-cell; such cells are excluded
    /// from feature extraction (macro exclusion).
    pub fn gcell_fully_blocked(&self, col: usize, row: usize) -> bool {
        self.blockage_coverage(col, row) >= 1.0 - 1e-9
    }
}

/// DRC error bounding boxes in layout units.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DrcReport {
    pub boxes: Vec<Rect>,
}

// ---------------------------------------------------------------------------
// JSON interchange documents

#[derive(Serialize, Deserialize)]
struct GridDoc {
    nx: usize,
    ny: usize,
    gcell_w: f64,
    gcell_h: f64,
}

#[derive(Serialize, Deserialize)]
struct CellDoc {
    id: String,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

#[derive(Serialize, Deserialize)]
struct PinDoc {
    id: String,
    cell: Option<String>,
    net: String,
    x: f64,
    y: f64,
    clock: bool,
}

#[derive(Serialize, Deserialize)]
struct NetDoc {
    id: String,
    pins: Vec<String>,
    ndr: bool,
}

#[derive(Serialize, Deserialize)]
struct CongestionDoc {
    /// Per metal layer: all vertical borders row-major, then all horizontal
    /// borders row-major, each entry a [capacity, load] pair.
    metal: Vec<Vec<(u32, u32)>>,
    /// Per via layer: one [capacity, load] pair per g-cell, row-major.
    via: Vec<Vec<(u32, u32)>>,
}

#[derive(Serialize, Deserialize)]
struct LayoutDoc {
    grid: GridDoc,
    layers: LayerConfig,
    cells: Vec<CellDoc>,
    pins: Vec<PinDoc>,
    nets: Vec<NetDoc>,
    blockages: Vec<Rect>,
    congestion: CongestionDoc,
}

fn json_error(err: serde_path_to_error::Error<serde_json::Error>, input: &[u8]) -> Error {
    let inner = err.inner();
    let (line, column) = (inner.line(), inner.column());
    if matches!(
        inner.classify(),
        serde_json::error::Category::Syntax | serde_json::error::Category::Eof
    ) {
        Error::Parse {
            offset: byte_offset(input, line, column),
            line,
            column,
            message: inner.to_string(),
        }
    } else {
        Error::Schema {
            path: err.path().to_string(),
            message: inner.to_string(),
        }
    }
}

/// Translate serde_json's 1-based (line, column) to a byte offset.
fn byte_offset(input: &[u8], line: usize, column: usize) -> usize {
    let mut offset = 0usize;
    let mut cur_line = 1usize;
    for (idx, &b) in input.iter().enumerate() {
        if cur_line == line {
            offset = idx;
            break;
        }
        if b == b'\n' {
            cur_line += 1;
            offset = idx + 1;
        }
    }
    (offset + column.saturating_sub(1)).min(input.len())
}

pub(crate) fn deserialize_doc<'a, T: Deserialize<'a>>(bytes: &'a [u8]) -> Result<T> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(&mut de).map_err(|e| json_error(e, bytes))
}

/// Canonical JSON bytes: object keys sorted, arrays kept in order.
pub(crate) fn canonical_json<T: Serialize>(value: &T) -> Vec<u8> {
    // serde_json::Value sorts object keys (BTreeMap-backed by default).
    let value = serde_json::to_value(value).expect("serializable");
    let mut bytes = serde_json::to_vec(&value).expect("serializable");
    bytes.push(b'\n');
    bytes
}

/// Parse and fully validate a layout document.
pub fn parse_layout(bytes: &[u8]) -> Result<LayoutGrid> {
    let doc: LayoutDoc = deserialize_doc(bytes)?;
    grid_from_doc(doc)
}

/// Write a layout as canonical JSON. `parse_layout(write_layout(g)) == g`.
pub fn write_layout(grid: &LayoutGrid) -> Vec<u8> {
    canonical_json(&doc_from_grid(grid))
}

/// Parse a DRC report: a JSON list of {x, y, w, h} boxes.
pub fn parse_drc(bytes: &[u8]) -> Result<DrcReport> {
    let boxes: Vec<Rect> = deserialize_doc(bytes)?;
    for (idx, b) in boxes.iter().enumerate() {
        if !(b.x.is_finite() && b.y.is_finite() && b.w.is_finite() && b.h.is_finite()) {
            return Err(Error::validation(
                format!("drc box {idx}"),
                "non-finite coordinate",
            ));
        }
        if b.w < 0.0 || b.h < 0.0 {
            return Err(Error::validation(
                format!("drc box {idx}"),
                format!("negative extent w={} h={}", b.w, b.h),
            ));
        }
    }
    Ok(DrcReport { boxes })
}

pub fn write_drc(report: &DrcReport) -> Vec<u8> {
    canonical_json(&report.boxes)
}

fn doc_from_grid(grid: &LayoutGrid) -> LayoutDoc {
    LayoutDoc {
        grid: GridDoc {
            nx: grid.nx,
            ny: grid.ny,
            gcell_w: grid.gcell_w,
            gcell_h: grid.gcell_h,
        },
        layers: grid.layers,
        cells: grid
            .cells
            .iter()
            .map(|c| CellDoc {
                id: c.id.clone(),
                x: c.rect.x,
                y: c.rect.y,
                w: c.rect.w,
                h: c.rect.h,
            })
            .collect(),
        pins: grid
            .pins
            .iter()
            .map(|p| PinDoc {
                id: p.id.clone(),
                cell: p.cell.clone(),
                net: p.net.clone(),
                x: p.x,
                y: p.y,
                clock: p.is_clock,
            })
            .collect(),
        nets: grid
            .nets
            .iter()
            .map(|n| NetDoc {
                id: n.id.clone(),
                pins: n.pins.clone(),
                ndr: n.has_ndr,
            })
            .collect(),
        blockages: grid.blockages.clone(),
        congestion: CongestionDoc {
            metal: grid
                .congestion
                .metal
                .iter()
                .map(|layer| {
                    layer
                        .vertical
                        .iter()
                        .chain(layer.horizontal.iter())
                        .map(|cl| (cl.cap, cl.load))
                        .collect()
                })
                .collect(),
            via: grid
                .congestion
                .via
                .iter()
                .map(|layer| layer.cells.iter().map(|cl| (cl.cap, cl.load)).collect())
                .collect(),
        },
    }
}

fn grid_from_doc(doc: LayoutDoc) -> Result<LayoutGrid> {
    let g = &doc.grid;
    if g.nx == 0 || g.ny == 0 {
        return Err(Error::validation("grid", "nx and ny must be >= 1"));
    }
    if !(g.gcell_w.is_finite() && g.gcell_w > 0.0 && g.gcell_h.is_finite() && g.gcell_h > 0.0) {
        return Err(Error::validation("grid", "g-cell dimensions must be positive"));
    }
    if doc.layers.metal == 0 || doc.layers.via == 0 {
        return Err(Error::validation("layers", "need >= 1 metal and via layer"));
    }

    let (nx, ny) = (g.nx, g.ny);
    let n_vertical = (nx - 1) * ny;
    let n_horizontal = nx * (ny - 1);

    if doc.congestion.metal.len() != doc.layers.metal {
        return Err(Error::validation(
            "congestion.metal",
            format!(
                "expected {} layers, got {}",
                doc.layers.metal,
                doc.congestion.metal.len()
            ),
        ));
    }
    if doc.congestion.via.len() != doc.layers.via {
        return Err(Error::validation(
            "congestion.via",
            format!(
                "expected {} layers, got {}",
                doc.layers.via,
                doc.congestion.via.len()
            ),
        ));
    }

    let mut metal = Vec::with_capacity(doc.layers.metal);
    for (li, entries) in doc.congestion.metal.iter().enumerate() {
        if entries.len() != n_vertical + n_horizontal {
            return Err(Error::validation(
                format!("congestion.metal[{li}]"),
                format!(
                    "expected {} edges ({} vertical + {} horizontal), got {}",
                    n_vertical + n_horizontal,
                    n_vertical,
                    n_horizontal,
                    entries.len()
                ),
            ));
        }
        let to_cl = |&(cap, load): &(u32, u32)| CapLoad { cap, load };
        metal.push(MetalLayer {
            vertical: entries[..n_vertical].iter().map(to_cl).collect(),
            horizontal: entries[n_vertical..].iter().map(to_cl).collect(),
        });
    }

    let mut via = Vec::with_capacity(doc.layers.via);
    for (li, entries) in doc.congestion.via.iter().enumerate() {
        if entries.len() != nx * ny {
            return Err(Error::validation(
                format!("congestion.via[{li}]"),
                format!("expected {} g-cells, got {}", nx * ny, entries.len()),
            ));
        }
        via.push(ViaLayer {
            cells: entries
                .iter()
                .map(|&(cap, load)| CapLoad { cap, load })
                .collect(),
        });
    }

    let grid = LayoutGrid {
        nx,
        ny,
        gcell_w: g.gcell_w,
        gcell_h: g.gcell_h,
        layers: doc.layers,
        cells: doc
            .cells
            .into_iter()
            .map(|c| StdCell {
                id: c.id,
                rect: Rect::new(c.x, c.y, c.w, c.h),
            })
            .collect(),
        pins: doc
            .pins
            .into_iter()
            .map(|p| Pin {
                id: p.id,
                cell: p.cell,
                net: p.net,
                x: p.x,
                y: p.y,
                is_clock: p.clock,
            })
            .collect(),
        nets: doc
            .nets
            .into_iter()
            .map(|n| Net {
                id: n.id,
                pins: n.pins,
                has_ndr: n.ndr,
            })
            .collect(),
        blockages: doc.blockages,
        congestion: CongestionMap { metal, via },
    };
    validate_grid(&grid)?;
    Ok(grid)
}

fn validate_grid(grid: &LayoutGrid) -> Result<()> {
    let bbox = grid.bbox();

    let mut cell_ids = HashSet::new();
    for c in &grid.cells {
        if !cell_ids.insert(c.id.as_str()) {
            return Err(Error::validation(format!("cell {}", c.id), "duplicate id"));
        }
        let r = &c.rect;
        if ![r.x, r.y, r.w, r.h].iter().all(|v| v.is_finite()) || r.w < 0.0 || r.h < 0.0 {
            return Err(Error::validation(
                format!("cell {}", c.id),
                "invalid rectangle",
            ));
        }
        if !r.contained_in(&bbox) {
            return Err(Error::validation(
                format!("cell {}", c.id),
                "geometry outside layout bounding box",
            ));
        }
    }

    let nets_by_id: HashMap<&str, &Net> = grid.nets.iter().map(|n| (n.id.as_str(), n)).collect();
    if nets_by_id.len() != grid.nets.len() {
        let mut seen = HashSet::new();
        for n in &grid.nets {
            if !seen.insert(n.id.as_str()) {
                return Err(Error::validation(format!("net {}", n.id), "duplicate id"));
            }
        }
    }

    let mut pins_by_id: HashMap<&str, &Pin> = HashMap::with_capacity(grid.pins.len());
    for p in &grid.pins {
        if pins_by_id.insert(p.id.as_str(), p).is_some() {
            return Err(Error::validation(format!("pin {}", p.id), "duplicate id"));
        }
        if !(p.x.is_finite() && p.y.is_finite()) {
            return Err(Error::validation(
                format!("pin {}", p.id),
                "non-finite location",
            ));
        }
        if !(0.0..=bbox.x1()).contains(&p.x) || !(0.0..=bbox.y1()).contains(&p.y) {
            return Err(Error::validation(
                format!("pin {}", p.id),
                "location outside layout bounding box",
            ));
        }
        if !nets_by_id.contains_key(p.net.as_str()) {
            return Err(Error::validation(
                format!("pin {}", p.id),
                format!("references missing net {}", p.net),
            ));
        }
        if let Some(cell) = &p.cell {
            if !cell_ids.contains(cell.as_str()) {
                return Err(Error::validation(
                    format!("pin {}", p.id),
                    format!("references missing cell {cell}"),
                ));
            }
        }
    }

    for n in &grid.nets {
        if n.pins.is_empty() {
            return Err(Error::validation(format!("net {}", n.id), "lists no pins"));
        }
        for pid in &n.pins {
            match pins_by_id.get(pid.as_str()) {
                None => {
                    return Err(Error::validation(
                        format!("net {}", n.id),
                        format!("lists missing pin {pid}"),
                    ))
                }
                Some(p) if p.net != n.id => {
                    return Err(Error::validation(
                        format!("net {}", n.id),
                        format!("lists pin {pid} which belongs to net {}", p.net),
                    ))
                }
                _ => {}
            }
        }
    }
    // Every pin must appear in its net's pin list (net lists were checked to
    // point back, so matching counts is enough).
    let listed: usize = grid.nets.iter().map(|n| n.pins.len()).sum();
    if listed != grid.pins.len() {
        let mut in_net: HashSet<&str> = HashSet::new();
        for n in &grid.nets {
            for pid in &n.pins {
                in_net.insert(pid.as_str());
            }
        }
        for p in &grid.pins {
            if !in_net.contains(p.id.as_str()) {
                return Err(Error::validation(
                    format!("pin {}", p.id),
                    format!("not listed by its net {}", p.net),
                ));
            }
        }
        return Err(Error::validation(
            "nets",
            "a net lists the same pin more than once",
        ));
    }

    for (idx, b) in grid.blockages.iter().enumerate() {
        if ![b.x, b.y, b.w, b.h].iter().all(|v| v.is_finite()) || b.w < 0.0 || b.h < 0.0 {
            return Err(Error::validation(
                format!("blockage {idx}"),
                "invalid rectangle",
            ));
        }
        if !b.contained_in(&bbox) {
            return Err(Error::validation(
                format!("blockage {idx}"),
                "geometry outside layout bounding box",
            ));
        }
    }
    Ok(())
}
