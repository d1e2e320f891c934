//! Grid environments and the `aifmap v1` text format.
//!
//! ```text
//! aifmap v1 symbols=unique
//! #####
//! #S.G#
//! #####
//! ```
//!
//! `#` is a wall, `.` free floor, `0`-`9` floor showing that symbol, `G` the
//! goal (symbol 10), `S` the start, `A`/`B` named junctions. The `symbols`
//! mode decides what plain floor shows: `zero` (symbol 0 everywhere),
//! `unique` (one symbol per cell) or `blocks:N` (one symbol per N×N block).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{quantize, Action, Pose};

pub const GOAL_SYMBOL: u32 = 10;
/// First symbol handed out to plain floor in `unique` and `blocks` modes.
pub const FLOOR_SYMBOL_BASE: u32 = 11;

pub type Cell = (usize, usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SymbolMode {
    Zero,
    Unique,
    Blocks(usize),
}

impl FromStr for SymbolMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "zero" => Ok(SymbolMode::Zero),
            "unique" => Ok(SymbolMode::Unique),
            _ => match s.strip_prefix("blocks:").map(str::parse::<usize>) {
                Some(Ok(n)) if n > 0 => Ok(SymbolMode::Blocks(n)),
                _ => Err(format!("unknown symbols mode `{s}`")),
            },
        }
    }
}

impl std::fmt::Display for SymbolMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SymbolMode::Zero => f.write_str("zero"),
            SymbolMode::Unique => f.write_str("unique"),
            SymbolMode::Blocks(n) => write!(f, "blocks:{n}"),
        }
    }
}

/// Static layout of a grid world. Row 0 is the top line of the file.
#[derive(Clone, Debug, PartialEq)]
pub struct GridEnv {
    width: usize,
    height: usize,
    glyphs: Vec<u8>,
    symbols: Vec<u32>,
    num_symbols: usize,
    mode: SymbolMode,
    start: Cell,
    goal: Option<Cell>,
    junctions: BTreeMap<char, Cell>,
}

impl GridEnv {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .find(|(_, l)| !l.trim().is_empty())
            .ok_or(Error::MapParse {
                line: 1,
                msg: "empty map".into(),
            })?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("aifmap") || parts.next() != Some("v1") {
            return Err(Error::MapParse {
                line: 1,
                msg: "expected `aifmap v1` header".into(),
            });
        }
        let mut mode = SymbolMode::Zero;
        for p in parts {
            match p.split_once('=') {
                Some(("symbols", v)) => {
                    mode = v.parse().map_err(|msg| Error::MapParse { line: 1, msg })?;
                }
                _ => {
                    return Err(Error::MapParse {
                        line: 1,
                        msg: format!("unknown header field `{p}`"),
                    })
                }
            }
        }
        let mut rows: Vec<&str> = Vec::new();
        for (i, l) in lines {
            let l = l.trim_end();
            if l.is_empty() {
                continue;
            }
            if let Some(w) = rows.first().map(|r| r.len()) {
                if l.len() != w {
                    return Err(Error::MapParse {
                        line: i + 1,
                        msg: format!("row width {} != {w}", l.len()),
                    });
                }
            }
            if let Some(bad) = l
                .chars()
                .find(|c| !matches!(c, '#' | '.' | '0'..='9' | 'G' | 'S' | 'A' | 'B'))
            {
                return Err(Error::MapParse {
                    line: i + 1,
                    msg: format!("unknown glyph `{bad}`"),
                });
            }
            rows.push(l);
        }
        if rows.is_empty() {
            return Err(Error::MapParse {
                line: 2,
                msg: "map has no rows".into(),
            });
        }
        let height = rows.len();
        let width = rows[0].len();
        let glyphs: Vec<u8> = rows.iter().flat_map(|r| r.bytes()).collect();

        let mut start = None;
        let mut goal = None;
        let mut junctions = BTreeMap::new();
        for (k, &g) in glyphs.iter().enumerate() {
            let cell = (k / width, k % width);
            match g {
                b'S' => {
                    if start.replace(cell).is_some() {
                        return Err(Error::MapParse {
                            line: cell.0 + 2,
                            msg: "more than one start".into(),
                        });
                    }
                }
                b'G' => {
                    goal.get_or_insert(cell);
                }
                b'A' | b'B' => {
                    junctions.insert(g as char, cell);
                }
                _ => {}
            }
        }
        let start = start.ok_or(Error::MapParse {
            line: 1,
            msg: "map has no start `S`".into(),
        })?;

        let blocks_per_row = |n: usize| width.div_ceil(n);
        let mut next_unique = FLOOR_SYMBOL_BASE;
        let mut symbols = vec![0u32; glyphs.len()];
        let mut max_symbol = GOAL_SYMBOL;
        for (k, &g) in glyphs.iter().enumerate() {
            let (r, c) = (k / width, k % width);
            let s = match g {
                b'#' => 0,
                b'0'..=b'9' => (g - b'0') as u32,
                b'G' => GOAL_SYMBOL,
                _ => match mode {
                    SymbolMode::Zero => 0,
                    SymbolMode::Unique => {
                        next_unique += 1;
                        next_unique - 1
                    }
                    SymbolMode::Blocks(n) => {
                        FLOOR_SYMBOL_BASE + ((r / n) * blocks_per_row(n) + c / n) as u32
                    }
                },
            };
            if g != b'#' {
                max_symbol = max_symbol.max(s);
            }
            symbols[k] = s;
        }
        Ok(Self {
            width,
            height,
            glyphs,
            symbols,
            num_symbols: max_symbol as usize + 1,
            mode,
            start,
            goal,
            junctions,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_symbols(&self) -> usize {
        self.num_symbols
    }

    pub fn symbol_mode(&self) -> SymbolMode {
        self.mode
    }

    pub fn start(&self) -> Cell {
        self.start
    }

    pub fn goal(&self) -> Option<Cell> {
        self.goal
    }

    pub fn junction(&self, name: char) -> Option<Cell> {
        self.junctions.get(&name).copied()
    }

    pub fn in_bounds(&self, r: i64, c: i64) -> bool {
        r >= 0 && c >= 0 && (r as usize) < self.height && (c as usize) < self.width
    }

    pub fn is_wall(&self, cell: Cell) -> bool {
        self.glyphs[cell.0 * self.width + cell.1] == b'#'
    }

    pub fn glyph(&self, cell: Cell) -> char {
        self.glyphs[cell.0 * self.width + cell.1] as char
    }

    pub fn symbol(&self, cell: Cell) -> u32 {
        self.symbols[cell.0 * self.width + cell.1]
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height * self.width)
            .filter(|&k| self.glyphs[k] != b'#')
            .map(|k| (k / self.width, k % self.width))
    }

    /// Cell centre in metres: x grows with the column, y grows upward.
    pub fn cell_pose(&self, cell: Cell) -> Pose {
        Pose::new(cell.1 as f64, (self.height - 1 - cell.0) as f64)
    }

    /// Cell containing a point, `None` outside the grid.
    pub fn pose_cell(&self, p: &Pose) -> Option<Cell> {
        let c = quantize(p.x, 1.0) as i64;
        let r = self.height as i64 - 1 - quantize(p.y, 1.0) as i64;
        self.in_bounds(r, c).then_some((r as usize, c as usize))
    }

    /// Landing cell of a move of `step` metres along `action`.
    pub fn landing_cell(&self, from: Cell, action: Action, step: f64) -> Option<Cell> {
        let (dx, dy) = action.displacement(step, Some(1.0));
        self.pose_cell(&self.cell_pose(from).translated(dx, dy))
    }

    /// Render back to the text format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "aifmap v1 symbols={}", self.mode);
        for r in 0..self.height {
            s.push_str(
                std::str::from_utf8(&self.glyphs[r * self.width..(r + 1) * self.width])
                    .expect("ascii"),
            );
            s.push('\n');
        }
        s
    }
}

/// The T-maze style detour fixture: three routes from `S` to `G` of
/// increasing length. `A` sits on the shortest, `B` on the middle one.
pub const TOLMAN_MAP: &str = "\
aifmap v1 symbols=unique
########
#..G...#
#.#.##.#
#.#.##.#
#B#A##.#
#.#.##.#
#.#.##.#
#..S...#
########
";

/// A 40×40 warehouse: two columns of double-sided shelf racks separated by
/// four-cell aisles, with open loading areas along the walls.
pub fn warehouse_layout() -> String {
    let (w, h) = (40usize, 40usize);
    let mut g = vec![vec![b'.'; w]; h];
    for r in 0..h {
        for c in 0..w {
            if r == 0 || c == 0 || r == h - 1 || c == w - 1 {
                g[r][c] = b'#';
            }
        }
    }
    for band in 0..5 {
        let r0 = 6 + band * 6;
        for r in r0..r0 + 2 {
            for c in (5..17).chain(22..34) {
                g[r][c] = b'#';
            }
        }
    }
    g[h - 3][3] = b'S';
    let mut s = String::from("aifmap v1 symbols=blocks:8\n");
    for row in g {
        s.push_str(std::str::from_utf8(&row).expect("ascii"));
        s.push('\n');
    }
    s
}

/// A 6×6 m room with a central pillar, used for obstacle-displacement runs.
pub const MINI_WAREHOUSE_MAP: &str = "\
aifmap v1 symbols=unique
########
#......#
#......#
#..##..#
#..##..#
#......#
#S.....#
########
";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_tolman() {
        let env = GridEnv::parse(TOLMAN_MAP).unwrap();
        assert_eq!((env.width(), env.height()), (8, 9));
        assert_eq!(env.start(), (7, 3));
        assert_eq!(env.goal(), Some((1, 3)));
        assert_eq!(env.junction('A'), Some((4, 3)));
        assert_eq!(env.junction('B'), Some((4, 1)));
        assert_eq!(env.symbol((1, 3)), GOAL_SYMBOL);
        let free: Vec<_> = env.free_cells().collect();
        let mut syms: Vec<u32> = free.iter().map(|&c| env.symbol(c)).collect();
        syms.sort();
        syms.dedup();
        assert_eq!(syms.len(), free.len());
        assert_eq!(env.to_text(), TOLMAN_MAP);
    }

    #[test]
    fn geometry_round_trip() {
        let env = GridEnv::parse(TOLMAN_MAP).unwrap();
        let p = env.cell_pose((7, 3));
        assert_eq!(p, Pose::new(3.0, 1.0));
        assert_eq!(env.pose_cell(&p), Some((7, 3)));
        assert_eq!(
            env.landing_cell((7, 3), Action::heading(3), 1.0),
            Some((6, 3))
        );
        assert_eq!(
            env.landing_cell((7, 3), Action::heading(1), 1.0),
            Some((6, 4))
        );
    }

    #[test]
    fn rejects_bad_maps() {
        assert!(GridEnv::parse("nope\n#S#\n").is_err());
        assert!(GridEnv::parse("aifmap v1\n#S#\n##\n").is_err());
        assert!(GridEnv::parse("aifmap v1\n#.#\n").is_err());
        assert!(GridEnv::parse("aifmap v1 symbols=blocks:0\n#S#\n").is_err());
        assert!(GridEnv::parse("aifmap v1\n#Sx\n").is_err());
    }

    #[test]
    fn warehouse_is_forty_square() {
        let env = GridEnv::parse(&warehouse_layout()).unwrap();
        assert_eq!((env.width(), env.height()), (40, 40));
        assert_eq!(env.symbol_mode(), SymbolMode::Blocks(8));
        assert_eq!(env.num_symbols(), 11 + 25);
    }
}
