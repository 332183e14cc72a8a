//! CelebA aligned-landmark text files: a count line, a header naming the ten
//! coordinate columns, then `filename x1 y1 … x5 y5` per image.

use std::collections::BTreeMap;
use std::path::Path;

use dift_core::{LandmarkChannels, Point};

use crate::error::{Error, Result};
use crate::fsutil;

pub const COLUMNS: [&str; 10] = [
    "lefteye_x",
    "lefteye_y",
    "righteye_x",
    "righteye_y",
    "nose_x",
    "nose_y",
    "leftmouth_x",
    "leftmouth_y",
    "rightmouth_x",
    "rightmouth_y",
];

/// Maps the five CelebA points (in column order) onto named channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grouping {
    pub channels: Vec<(String, Vec<usize>)>,
}

impl Default for Grouping {
    /// Eyes, nose, mouth corners.
    fn default() -> Self {
        let names = LandmarkChannels::DEFAULT_NAMES;
        Grouping {
            channels: vec![
                (names[0].to_string(), vec![0, 1]),
                (names[1].to_string(), vec![2]),
                (names[2].to_string(), vec![3, 4]),
            ],
        }
    }
}

impl Grouping {
    fn apply(&self, pts: &[Point; 5]) -> LandmarkChannels {
        LandmarkChannels::new(
            self.channels
                .iter()
                .map(|(name, idx)| (name.clone(), idx.iter().map(|i| pts[*i]).collect()))
                .collect(),
        )
    }

    fn invert(&self, lm: &LandmarkChannels) -> Option<[Point; 5]> {
        let mut pts = [None; 5];
        if lm.len() != self.channels.len() {
            return None;
        }
        for (c, (_, idx)) in self.channels.iter().enumerate() {
            let got = lm.points(c);
            if got.len() != idx.len() {
                return None;
            }
            for (i, p) in idx.iter().zip(got) {
                *pts.get_mut(*i)? = Some(*p);
            }
        }
        let mut out = [Point::new(0, 0); 5];
        for (o, p) in out.iter_mut().zip(pts) {
            *o = p?;
        }
        Some(out)
    }
}

pub type LandmarkMap = BTreeMap<String, LandmarkChannels>;

pub fn parse(text: &str, grouping: &Grouping, path: &Path) -> Result<LandmarkMap> {
    let err = |line: usize, d: String| Error::format(path, Some(line), d);
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (n, first) = lines.next().ok_or_else(|| err(1, "missing count line".into()))?;
    let count: usize = first.trim().parse().map_err(|_| err(n, format!("bad count line {first:?}")))?;
    let (n, header) = lines.next().ok_or_else(|| err(2, "missing header line".into()))?;
    let names: Vec<&str> = header.split_whitespace().collect();
    if names != COLUMNS {
        return Err(err(n, format!("header must name the columns {}", COLUMNS.join(" "))));
    }
    let mut map = LandmarkMap::new();
    for (n, line) in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 11 {
            return Err(err(n, format!("expected a filename and 10 coordinates, got {} fields", fields.len())));
        }
        let mut v = [0i32; 10];
        for (slot, f) in v.iter_mut().zip(&fields[1..]) {
            *slot = f.parse().map_err(|_| err(n, format!("bad coordinate {f:?}")))?;
        }
        let pts = core::array::from_fn(|i| Point::new(v[2 * i], v[2 * i + 1]));
        if map.insert(fields[0].to_string(), grouping.apply(&pts)).is_some() {
            return Err(err(n, format!("duplicate entry {}", fields[0])));
        }
    }
    if map.len() != count {
        return Err(Error::format(path, None, format!("count line says {count}, file has {} rows", map.len())));
    }
    Ok(map)
}

pub fn render(map: &LandmarkMap, grouping: &Grouping) -> std::result::Result<String, String> {
    let mut out = format!("{}\n{}\n", map.len(), COLUMNS.join(" "));
    for (name, lm) in map {
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(format!("image name {name:?} cannot be written"));
        }
        let pts = grouping
            .invert(lm)
            .ok_or_else(|| format!("{name}: landmarks do not match the channel grouping"))?;
        out.push_str(name);
        for p in pts {
            out.push_str(&format!(" {} {}", p.x, p.y));
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn load(path: &Path, grouping: &Grouping) -> Result<LandmarkMap> {
    let bytes = fsutil::read(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| Error::format(path, None, "not UTF-8 text"))?;
    parse(text, grouping, path)
}

pub fn save(path: &Path, map: &LandmarkMap, grouping: &Grouping) -> Result<()> {
    let text = render(map, grouping).map_err(|d| Error::format(path, None, d))?;
    fsutil::write_atomic(path, text.as_bytes())
}
