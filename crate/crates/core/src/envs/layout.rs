//! ASCII grid maps.
//!
//! Legend, one character per cell, rows top to bottom:
//!
//! | char | meaning                                   |
//! |------|-------------------------------------------|
//! | `.`  | floor                                     |
//! | `x`  | shelf storage cell (starts holding a shelf) |
//! | `g`  | delivery (goal) cell                      |
//!
//! Blank lines and lines starting with `;` are ignored. Every row must have
//! the same width. Map files are named `<env>-<layout>.txt`, e.g.
//! `rware-tiny.txt` or `bpush-small.txt`.

use std::collections::BTreeMap;
use std::path::Path;

use super::Cell;
use crate::posg::{EnvError, EnvKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellTag {
    Floor,
    Shelf,
    Delivery,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridLayout {
    pub width: usize,
    pub height: usize,
    cells: Vec<CellTag>,
}

impl GridLayout {
    pub fn parse(text: &str) -> Result<Self, EnvError> {
        let rows: Vec<&str> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with(';'))
            .collect();
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        if height == 0 || width == 0 {
            return Err(EnvError::Layout("empty map".into()));
        }
        let mut cells = Vec::with_capacity(width * height);
        for (r, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(EnvError::Layout(format!(
                    "row {r} has {} cells, expected {width}",
                    row.chars().count()
                )));
            }
            for ch in row.chars() {
                cells.push(match ch {
                    '.' => CellTag::Floor,
                    'x' | 'X' => CellTag::Shelf,
                    'g' | 'G' => CellTag::Delivery,
                    other => return Err(EnvError::Layout(format!("unknown map character `{other}` in row {r}"))),
                });
            }
        }
        Ok(Self { width, height, cells })
    }

    /// All-floor rectangle.
    pub fn open(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            cells: vec![CellTag::Floor; width * height],
        }
    }

    pub fn tag(&self, cell: Cell) -> Option<CellTag> {
        cell.in_bounds(self.height, self.width)
            .then(|| self.cells[cell.row as usize * self.width + cell.col as usize])
    }

    pub fn cells_with(&self, tag: CellTag) -> Vec<Cell> {
        self.all_cells().filter(|&c| self.tag(c) == Some(tag)).collect()
    }

    pub fn all_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height as i32).flat_map(move |r| (0..self.width as i32).map(move |c| Cell::new(r, c)))
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.in_bounds(self.height, self.width)
    }
}

macro_rules! builtin_maps {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../../layouts/", $name, ".txt")))),*]
    };
}

const BUILTIN: &[(&str, &str)] = builtin_maps![
    "rware-tiny",
    "rware-tiny-3",
    "rware-tiny-6",
    "rware-tiny-10",
    "rware-small",
    "rware-small-3",
    "rware-small-8",
    "rware-corridor",
    "rware-corridor-3",
    "rware-corridor-6",
    "rware-corridor-10",
    "rware-wide-left",
    "rware-wide-left-3",
    "rware-wide-left-6",
    "rware-wide-right",
    "rware-wide-right-3",
    "rware-wide-right-6",
    "rware-wide-both",
    "rware-wide-both-3",
    "rware-wide-both-6",
    "bpush-small",
    "bpush-medium",
    "bpush-large",
];

/// Named maps for grid families plus `<W>x<H>` sizes for parametric ones
/// (foraging, beacon).
#[derive(Clone, Debug, Default)]
pub struct LayoutRegistry {
    maps: BTreeMap<(EnvKind, String), GridLayout>,
}

impl LayoutRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry preloaded with the bundled warehouse and boulder-push maps.
    pub fn builtin() -> Self {
        let mut reg = Self::default();
        for (file, text) in BUILTIN {
            let (kind, id) = split_name(file).expect("builtin map names are well formed");
            let layout = GridLayout::parse(text).unwrap_or_else(|e| panic!("builtin map {file}: {e}"));
            reg.maps.insert((kind, id.to_string()), layout);
        }
        reg
    }

    pub fn insert(&mut self, kind: EnvKind, id: impl Into<String>, layout: GridLayout) {
        self.maps.insert((kind, id.into()), layout);
    }

    /// Adds every `<env>-<layout>.txt` file in `dir`, replacing same-named
    /// entries.
    pub fn load_dir(&mut self, dir: &Path) -> Result<usize, EnvError> {
        let entries = std::fs::read_dir(dir).map_err(|e| EnvError::Layout(format!("{}: {e}", dir.display())))?;
        let mut loaded = 0;
        for entry in entries {
            let path = entry.map_err(|e| EnvError::Layout(e.to_string()))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
            let Some((kind, id)) = split_name(stem) else { continue };
            let text = std::fs::read_to_string(&path).map_err(|e| EnvError::Layout(format!("{}: {e}", path.display())))?;
            let layout = GridLayout::parse(&text).map_err(|e| EnvError::Layout(format!("{}: {e}", path.display())))?;
            self.maps.insert((kind, id.to_string()), layout);
            loaded += 1;
        }
        Ok(loaded)
    }

    pub fn ids(&self, kind: EnvKind) -> Vec<&str> {
        self.maps.keys().filter(|(k, _)| *k == kind).map(|(_, id)| id.as_str()).collect()
    }

    pub fn grid(&self, kind: EnvKind, id: &str) -> Result<&GridLayout, EnvError> {
        self.maps.get(&(kind, id.to_string())).ok_or_else(|| EnvError::UnknownLayout {
            kind,
            layout: id.to_string(),
        })
    }

    /// `(width, height)` for a `<W>x<H>` layout id, or the size of a
    /// registered map with that id.
    pub fn dims(&self, kind: EnvKind, id: &str) -> Result<(usize, usize), EnvError> {
        if let Ok(g) = self.grid(kind, id) {
            return Ok((g.width, g.height));
        }
        let unknown = || EnvError::UnknownLayout {
            kind,
            layout: id.to_string(),
        };
        let (w, h) = id.split_once('x').ok_or_else(unknown)?;
        let w: usize = w.parse().map_err(|_| unknown())?;
        let h: usize = h.parse().map_err(|_| unknown())?;
        if w == 0 || h == 0 {
            return Err(unknown());
        }
        Ok((w, h))
    }
}

fn split_name(stem: &str) -> Option<(EnvKind, &str)> {
    let (kind, id) = stem.split_once('-')?;
    Some((kind.parse().ok()?, id))
}
