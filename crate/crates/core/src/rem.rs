//! The Radio Environment Map: one entry per recognised UE position set, each
//! holding a value and a visit count for every active-BS set.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{hausdorff, UePositionSet};

/// Largest network the action encoding supports (2^19 actions per entry).
pub const MAX_BS: usize = 20;

/// Activity pattern over all base stations. BS 0 is the macro and is always on.
///
/// Encoded as an integer in `[0, 2^(n_bs-1))`: bit `k` is the activity of
/// pico `k + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActiveSet {
    n_bs: u8,
    index: u32,
}

impl ActiveSet {
    pub fn action_count(n_bs: usize) -> usize {
        1usize << (n_bs - 1)
    }

    pub fn from_index(n_bs: usize, index: usize) -> Result<Self> {
        check_n_bs(n_bs)?;
        if index >= Self::action_count(n_bs) {
            return Err(Error::Contract(format!(
                "action index {index} out of range for {n_bs} base stations"
            )));
        }
        Ok(Self {
            n_bs: n_bs as u8,
            index: index as u32,
        })
    }

    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        check_n_bs(bits.len())?;
        if !bits[0] {
            return Err(Error::Contract("the macro BS (index 0) cannot be switched off".into()));
        }
        let index = bits[1..]
            .iter()
            .enumerate()
            .fold(0u32, |acc, (k, &on)| if on { acc | (1 << k) } else { acc });
        Ok(Self {
            n_bs: bits.len() as u8,
            index,
        })
    }

    pub fn all_on(n_bs: usize) -> Self {
        Self::from_index(n_bs, Self::action_count(n_bs) - 1).expect("valid n_bs")
    }

    pub fn macro_only(n_bs: usize) -> Self {
        Self::from_index(n_bs, 0).expect("valid n_bs")
    }

    /// Every action for an `n_bs` network, in encoding order.
    pub fn all(n_bs: usize) -> impl Iterator<Item = ActiveSet> {
        let n = n_bs as u8;
        (0..Self::action_count(n_bs) as u32).map(move |index| ActiveSet { n_bs: n, index })
    }

    pub fn n_bs(&self) -> usize {
        self.n_bs as usize
    }

    pub fn index(&self) -> usize {
        self.index as usize
    }

    pub fn is_active(&self, bs: usize) -> bool {
        bs == 0 || (bs < self.n_bs() && self.index & (1 << (bs - 1)) != 0)
    }

    pub fn bits(&self) -> Vec<bool> {
        (0..self.n_bs()).map(|b| self.is_active(b)).collect()
    }

    /// Number of active BSs, macro included.
    pub fn active_count(&self) -> u32 {
        1 + self.index.count_ones()
    }

    /// Copy with pico `bs` switched to `on`. The macro cannot be changed.
    pub fn with(&self, bs: usize, on: bool) -> Result<Self> {
        if bs == 0 || bs >= self.n_bs() {
            return Err(Error::Contract(format!("BS {bs} is not a switchable pico")));
        }
        let mask = 1u32 << (bs - 1);
        let index = if on { self.index | mask } else { self.index & !mask };
        Ok(Self { n_bs: self.n_bs, index })
    }

    /// Ordering key for breaking ties between equally scored actions:
    /// fewer active BSs first, then lower encoding.
    pub fn tie_key(&self) -> (u32, u32) {
        (self.active_count(), self.index)
    }
}

impl fmt::Display for ActiveSet {
    /// Bit string with the macro first, e.g. `10110`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for on in self.bits() {
            f.write_str(if on { "1" } else { "0" })?;
        }
        Ok(())
    }
}

fn check_n_bs(n_bs: usize) -> Result<()> {
    if (1..=MAX_BS).contains(&n_bs) {
        Ok(())
    } else {
        Err(Error::Contract(format!(
            "number of base stations must be in 1..={MAX_BS}, got {n_bs}"
        )))
    }
}

/// One REM row.
#[derive(Debug, Clone, PartialEq)]
pub struct RemEntry {
    pub state: UePositionSet,
    pub q: Vec<f64>,
    pub n: Vec<u64>,
}

impl RemEntry {
    pub fn new(state: UePositionSet, n_bs: usize, initial_q: f64) -> Self {
        let slots = ActiveSet::action_count(n_bs);
        Self {
            state,
            q: vec![initial_q; slots],
            n: vec![0; slots],
        }
    }

    pub fn q(&self, a: ActiveSet) -> f64 {
        self.q[a.index()]
    }

    pub fn n(&self, a: ActiveSet) -> u64 {
        self.n[a.index()]
    }

    pub fn total_visits(&self) -> u64 {
        self.n.iter().sum()
    }

    /// Stores a freshly computed value for `action` and counts the visit.
    pub fn record(&mut self, action: ActiveSet, q_new: f64) {
        let i = action.index();
        self.q[i] = q_new;
        self.n[i] += 1;
    }
}

/// Index of an entry inside a [`RemDb`]; stable because entries are never removed.
pub type EntryId = usize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub entry: EntryId,
    pub was_new: bool,
    /// Hausdorff distance to the matched entry's label (0 for new entries).
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemDb {
    grid: f64,
    n_bs: usize,
    initial_q: f64,
    entries: Vec<RemEntry>,
}

impl RemDb {
    pub fn new(grid: f64, n_bs: usize, initial_q: f64) -> Result<Self> {
        check_n_bs(n_bs)?;
        if !(grid.is_finite() && grid > 0.0) {
            return Err(Error::Contract(format!("grid size must be positive, got {grid}")));
        }
        if !initial_q.is_finite() {
            return Err(Error::Contract("initial value must be finite".into()));
        }
        Ok(Self {
            grid,
            n_bs,
            initial_q,
            entries: Vec::new(),
        })
    }

    pub fn grid(&self) -> f64 {
        self.grid
    }

    pub fn n_bs(&self) -> usize {
        self.n_bs
    }

    pub fn initial_q(&self) -> f64 {
        self.initial_q
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[RemEntry] {
        &self.entries
    }

    pub fn entry(&self, id: EntryId) -> &RemEntry {
        &self.entries[id]
    }

    pub fn entry_mut(&mut self, id: EntryId) -> &mut RemEntry {
        &mut self.entries[id]
    }

    /// Nearest stored entry with Hausdorff distance below the grid size;
    /// ties go to the earliest inserted.
    pub fn find(&self, observed: &UePositionSet) -> Option<(EntryId, f64)> {
        let mut best: Option<(EntryId, f64)> = None;
        for (id, e) in self.entries.iter().enumerate() {
            let d = hausdorff(&e.state, observed);
            if d < self.grid && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((id, d));
            }
        }
        best
    }

    pub fn match_or_insert(&mut self, observed: UePositionSet) -> Result<Match> {
        if observed.grid() != self.grid {
            return Err(Error::Contract(format!(
                "state quantized with grid {} but REM uses {}",
                observed.grid(),
                self.grid
            )));
        }
        if let Some((entry, distance)) = self.find(&observed) {
            return Ok(Match {
                entry,
                was_new: false,
                distance,
            });
        }
        self.entries
            .push(RemEntry::new(observed, self.n_bs, self.initial_q));
        Ok(Match {
            entry: self.entries.len() - 1,
            was_new: true,
            distance: 0.0,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("rem.tmp");
        let write = || -> std::io::Result<()> {
            let mut f = std::io::BufWriter::new(fs::File::create(&tmp)?);
            f.write_all(self.to_text().as_bytes())?;
            f.into_inner().map_err(|e| e.into_error())?.sync_all()?;
            fs::rename(&tmp, path)
        };
        write().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Current REM file format version.
pub const REM_FORMAT_VERSION: u32 = 1;
const REM_MAGIC: &str = "REM";
const REM_END: &str = "END";

// File layout, tab separated, one record per line:
//
//   REM  version=1  grid=3  n_bs=5  initial_q=0  entries=2
//   E    cells=0:1,2:-3  q=0.41,0,...  n=3,0,...
//   E    ...
//   END
//
// `cells` are integer grid indices (meters = index * grid). The `q` and `n`
// arrays are indexed by the ActiveSet encoding. Floats use Rust's shortest
// round-trip formatting, so save/load is bit exact.
impl RemDb {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{REM_MAGIC}\tversion={REM_FORMAT_VERSION}\tgrid={}\tn_bs={}\tinitial_q={}\tentries={}\n",
            self.grid,
            self.n_bs,
            self.initial_q,
            self.entries.len()
        );
        for e in &self.entries {
            let cells: Vec<String> = e.state.cells().iter().map(|(i, j)| format!("{i}:{j}")).collect();
            let q: Vec<String> = e.q.iter().map(|v| format!("{v:?}")).collect();
            let n: Vec<String> = e.n.iter().map(|v| v.to_string()).collect();
            out.push_str(&format!(
                "E\tcells={}\tq={}\tn={}\n",
                cells.join(","),
                q.join(","),
                n.join(",")
            ));
        }
        out.push_str(REM_END);
        out.push('\n');
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (ln, header) = lines.next().ok_or(Error::Corrupt {
            line: 1,
            reason: "empty file".into(),
        })?;
        let fields = Record::parse(ln, header, REM_MAGIC)?;
        let version: u32 = fields.num("version")?;
        if version > REM_FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                supported: REM_FORMAT_VERSION,
            });
        }
        let grid: f64 = fields.num("grid")?;
        let n_bs: usize = fields.num("n_bs")?;
        let initial_q: f64 = fields.num("initial_q")?;
        let count: usize = fields.num("entries")?;
        let mut db = RemDb::new(grid, n_bs, initial_q).map_err(|e| Error::Invariant(e.to_string()))?;
        let slots = ActiveSet::action_count(n_bs);

        for k in 0..count {
            let (ln, line) = lines.next().ok_or(Error::Corrupt {
                line: ln + k + 1,
                reason: format!("expected {count} entries, file ends after {k}"),
            })?;
            let rec = Record::parse(ln, line, "E")?;
            let cells = rec
                .get("cells")?
                .split(',')
                .map(|c| {
                    let (i, j) = c.split_once(':').ok_or_else(|| rec.corrupt("malformed cell"))?;
                    Ok((rec.parse_num::<i64>(i)?, rec.parse_num::<i64>(j)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let q = rec
                .get("q")?
                .split(',')
                .map(|v| rec.parse_num::<f64>(v))
                .collect::<Result<Vec<_>>>()?;
            let n = rec
                .get("n")?
                .split(',')
                .map(|v| rec.parse_num::<u64>(v))
                .collect::<Result<Vec<_>>>()?;
            if q.len() != slots || n.len() != slots {
                return Err(rec.corrupt(&format!(
                    "expected {slots} action slots, found q={} n={}",
                    q.len(),
                    n.len()
                )));
            }
            let state = UePositionSet::from_cells(cells, grid)
                .map_err(|e| Error::Invariant(format!("entry {k}: {e}")))?;
            db.entries.push(RemEntry { state, q, n });
        }
        match lines.next() {
            Some((_, l)) if l.trim_end() == REM_END => {}
            Some((ln, _)) => {
                return Err(Error::Corrupt {
                    line: ln,
                    reason: format!("expected `{REM_END}` after {count} entries"),
                })
            }
            None => {
                return Err(Error::Corrupt {
                    line: count + 2,
                    reason: "missing end marker (truncated file?)".into(),
                })
            }
        }
        db.check_separation()?;
        Ok(db)
    }

    /// Stored labels never move, so the insertion-time separation must still hold.
    fn check_separation(&self) -> Result<()> {
        for i in 0..self.entries.len() {
            for j in 0..i {
                let d = hausdorff(&self.entries[i].state, &self.entries[j].state);
                if d < self.grid {
                    return Err(Error::Invariant(format!(
                        "entries {j} and {i} are {d} m apart, below the grid size {}",
                        self.grid
                    )));
                }
            }
        }
        Ok(())
    }
}

struct Record<'a> {
    line: usize,
    fields: Vec<(&'a str, &'a str)>,
}

impl<'a> Record<'a> {
    fn parse(line: usize, text: &'a str, tag: &str) -> Result<Self> {
        let mut parts = text.split('\t');
        if parts.next() != Some(tag) {
            return Err(Error::Corrupt {
                line,
                reason: format!("expected a `{tag}` record"),
            });
        }
        let fields = parts
            .map(|p| {
                p.split_once('=').ok_or_else(|| Error::Corrupt {
                    line,
                    reason: format!("malformed field `{p}`"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { line, fields })
    }

    fn corrupt(&self, reason: &str) -> Error {
        Error::Corrupt {
            line: self.line,
            reason: reason.to_string(),
        }
    }

    fn get(&self, key: &str) -> Result<&'a str> {
        self.fields
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| self.corrupt(&format!("missing field `{key}`")))
    }

    fn parse_num<T: std::str::FromStr>(&self, v: &str) -> Result<T> {
        v.trim()
            .parse()
            .map_err(|_| self.corrupt(&format!("cannot parse `{v}`")))
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.parse_num(self.get(key)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{quantize, Point};
    use proptest::prelude::*;

    fn state(pts: &[(f64, f64)], g: f64) -> UePositionSet {
        let raw: Vec<Point> = pts.iter().map(|&(x, y)| Point::new(x, y)).collect();
        quantize(&raw, g).unwrap()
    }

    #[test]
    fn encoding_roundtrip_and_macro_pinned() {
        let a = ActiveSet::from_bits(&[true, false, true, true]).unwrap();
        assert_eq!(a.index(), 0b110);
        assert_eq!(a.to_string(), "1011");
        assert_eq!(a.active_count(), 3);
        assert_eq!(ActiveSet::from_index(4, 6).unwrap().bits(), vec![true, false, true, true]);
        assert!(ActiveSet::from_bits(&[false, true]).is_err());
        assert!(ActiveSet::from_index(3, 4).is_err());
        assert_eq!(ActiveSet::all(6).count(), 32);
        assert_eq!(ActiveSet::all_on(3).to_string(), "111");
        assert_eq!(ActiveSet::macro_only(3).to_string(), "100");
        assert!(a.with(0, false).is_err());
        assert_eq!(a.with(2, false).unwrap().to_string(), "1001");
    }

    #[test]
    fn empty_db_inserts() {
        let mut db = RemDb::new(3.0, 3, 0.0).unwrap();
        let m = db.match_or_insert(state(&[(0.0, 0.0)], 3.0)).unwrap();
        assert!(m.was_new);
        assert_eq!(db.len(), 1);
        assert_eq!(db.entry(0).q, vec![0.0; 4]);
        assert_eq!(db.entry(0).n, vec![0; 4]);
    }

    #[test]
    fn exact_match_returns_existing() {
        let mut db = RemDb::new(3.0, 3, 0.0).unwrap();
        let s = state(&[(10.0, 4.0), (-3.0, 7.0)], 3.0);
        db.match_or_insert(s.clone()).unwrap();
        let m = db.match_or_insert(s).unwrap();
        assert_eq!(m, Match { entry: 0, was_new: false, distance: 0.0 });
    }

    #[test]
    fn close_state_matches_with_off_grid_labels() {
        // Labels quantized with a finer grid than the REM threshold can sit
        // at non-zero distances below g.
        let mut db = RemDb::new(3.0, 2, 0.0).unwrap();
        db.entries.push(RemEntry::new(
            UePositionSet::from_cells(vec![(0, 0), (4, 0)], 0.5).unwrap(),
            2,
            0.0,
        ));
        let mut obs = UePositionSet::from_cells(vec![(0, 0), (9, 0)], 0.5).unwrap();
        // 2.5 m away, threshold 3 m: recognised.
        let d = hausdorff(&db.entries[0].state, &obs);
        assert_eq!(d, 2.5);
        assert!(db.find(&obs).is_some());
        obs = UePositionSet::from_cells(vec![(0, 0), (10, 0)], 0.5).unwrap();
        assert!(db.find(&obs).is_none());
    }

    #[test]
    fn nearest_then_earliest() {
        let mut db = RemDb::new(10.0, 2, 0.0).unwrap();
        for cells in [vec![(0, 0)], vec![(0, 8)], vec![(0, 4)]] {
            db.entries.push(RemEntry::new(UePositionSet::from_cells(cells, 1.0).unwrap(), 2, 0.0));
        }
        db.grid = 10.0;
        let q = UePositionSet::from_cells(vec![(0, 2)], 1.0).unwrap();
        // entries 0 and 2 both at distance 2; earliest wins
        assert_eq!(db.find(&q), Some((0, 2.0)));
        let q = UePositionSet::from_cells(vec![(0, 7)], 1.0).unwrap();
        assert_eq!(db.find(&q), Some((1, 1.0)));
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let mut db = RemDb::new(3.0, 2, 0.0).unwrap();
        assert!(db.match_or_insert(state(&[(0.0, 0.0)], 5.0)).is_err());
    }

    #[test]
    fn record_counts_and_isolates() {
        let mut e = RemEntry::new(state(&[(0.0, 0.0)], 3.0), 3, 0.0);
        let a = ActiveSet::from_index(3, 2).unwrap();
        e.record(a, 0.3);
        assert_eq!(e.n(a), 1);
        e.record(a, 0.5);
        assert_eq!(e.n(a), 2);
        assert_eq!(e.q(a), 0.5);
        for other in ActiveSet::all(3).filter(|&b| b != a) {
            assert_eq!(e.q(other), 0.0);
            assert_eq!(e.n(other), 0);
        }
        assert_eq!(e.total_visits(), 2);
    }

    fn sample_db() -> RemDb {
        let mut db = RemDb::new(3.0, 3, 0.0).unwrap();
        let m = db.match_or_insert(state(&[(1.0, 2.0), (30.0, -4.0)], 3.0)).unwrap();
        db.entry_mut(m.entry).record(ActiveSet::from_index(3, 1).unwrap(), 0.1 + 0.2);
        let m = db.match_or_insert(state(&[(100.0, 2.0)], 3.0)).unwrap();
        db.entry_mut(m.entry).record(ActiveSet::from_index(3, 3).unwrap(), 1.0 / 3.0);
        db
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("db.rem");
        let db = sample_db();
        db.save(&p).unwrap();
        assert_eq!(RemDb::load(&p).unwrap(), db);
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let text = sample_db().to_text();
        let cut = &text[..text.len() - 10];
        assert!(matches!(RemDb::from_text(cut), Err(Error::Corrupt { .. })));
        let first_two: String = text.lines().take(2).map(|l| format!("{l}\n")).collect();
        assert!(matches!(RemDb::from_text(&first_two), Err(Error::Corrupt { .. })));
        assert!(matches!(RemDb::from_text(""), Err(Error::Corrupt { .. })));
    }

    #[test]
    fn newer_version_names_both() {
        let text = sample_db().to_text().replacen("version=1", "version=7", 1);
        let err = RemDb::from_text(&text).unwrap_err();
        assert!(matches!(err, Error::Version { found: 7, supported: 1 }));
        let msg = err.to_string();
        assert!(msg.contains('7') && msg.contains('1'));
    }

    #[test]
    fn duplicate_labels_violate_invariant() {
        let text = sample_db().to_text();
        let lines: Vec<&str> = text.lines().collect();
        let dup = format!(
            "{}\n{}\n{}\nEND\n",
            lines[0],
            lines[1],
            lines[1]
        );
        assert!(matches!(RemDb::from_text(&dup), Err(Error::Invariant(_))));
    }

    proptest! {
        #[test]
        fn roundtrip_is_identity(
            states in prop::collection::vec(prop::collection::vec((-50i64..50, -50i64..50), 1..6), 1..6),
            values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 8),
        ) {
            let mut db = RemDb::new(2.0, 4, 0.0).unwrap();
            for (k, cells) in states.into_iter().enumerate() {
                let m = db.match_or_insert(UePositionSet::from_cells(cells, 2.0).unwrap()).unwrap();
                let a = ActiveSet::from_index(4, k % 8).unwrap();
                db.entry_mut(m.entry).record(a, values[k % values.len()]);
            }
            prop_assert_eq!(RemDb::from_text(&db.to_text()).unwrap(), db);
        }

        #[test]
        fn entries_stay_separated(
            states in prop::collection::vec(prop::collection::vec((-6i64..6, -6i64..6), 1..4), 1..30),
        ) {
            let mut db = RemDb::new(3.0, 2, 0.0).unwrap();
            for cells in states {
                db.match_or_insert(UePositionSet::from_cells(cells, 3.0).unwrap()).unwrap();
            }
            for i in 0..db.len() {
                for j in 0..i {
                    prop_assert!(hausdorff(&db.entries()[i].state, &db.entries()[j].state) >= 3.0);
                }
            }
        }
    }
}
