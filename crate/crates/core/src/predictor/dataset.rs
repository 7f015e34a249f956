use std::io::{BufRead, Write};

use crate::world::{read_map, write_map, Cell, Grid};

use super::{NodeImage, PredictError, MASKED};

/// One (observed, ground-truth) raster pair. In the target, 255 marks a
/// free lattice point, 0 a blocked one and 128 padding outside the world.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub input: NodeImage,
    pub target: NodeImage,
    pub episode: u64,
    pub step: u64,
    pub d_n: f64,
}

fn to_grid(img: &NodeImage, d_n: f64) -> Grid {
    let cells = img
        .pixels
        .iter()
        .map(|&b| Cell::from_byte(b).expect("node image pixels are tri-valued"))
        .collect();
    Grid::from_cells(img.size, img.size, d_n, cells)
}

fn from_grid(g: &Grid, extent: (usize, usize)) -> Result<NodeImage, PredictError> {
    if g.width() != g.height() {
        return Err(PredictError::Format(format!(
            "raster {}x{} is not square",
            g.width(),
            g.height()
        )));
    }
    Ok(NodeImage {
        size: g.width(),
        extent_w: extent.0,
        extent_h: extent.1,
        offset: Default::default(),
        pixels: g.cells().iter().map(|&c| c as u8).collect(),
    })
}

/// Metadata line `episode,step`, then the input and target rasters in the
/// map file format.
pub fn write_record<W: Write>(w: &mut W, r: &PredictionRecord) -> Result<(), PredictError> {
    writeln!(w, "{},{}", r.episode, r.step)?;
    write_map(w, &to_grid(&r.input, r.d_n)).map_err(|e| PredictError::Io(e.to_string()))?;
    write_map(w, &to_grid(&r.target, r.d_n)).map_err(|e| PredictError::Io(e.to_string()))?;
    Ok(())
}

/// Next record, or `None` at a clean end of stream.
pub fn read_record<R: BufRead>(r: &mut R) -> Result<Option<PredictionRecord>, PredictError> {
    let mut meta = String::new();
    if r.read_line(&mut meta)? == 0 {
        return Ok(None);
    }
    let (e, s) = meta
        .trim_end()
        .split_once(',')
        .ok_or_else(|| PredictError::Format(format!("bad metadata line {:?}", meta.trim_end())))?;
    let episode = e
        .parse()
        .map_err(|_| PredictError::Format(format!("bad episode {e:?}")))?;
    let step = s.parse().map_err(|_| PredictError::Format(format!("bad step {s:?}")))?;
    let fmt = |e: crate::world::WorldError| PredictError::Format(e.to_string());
    let ig = read_map(r).map_err(fmt)?;
    let tg = read_map(r).map_err(fmt)?;
    if ig.width() != tg.width() || ig.height() != tg.height() {
        return Err(PredictError::Format("input and target sizes differ".into()));
    }
    let mut ew = 0;
    let mut eh = 0;
    for y in 0..tg.height() {
        for x in 0..tg.width() {
            if tg.cells()[y * tg.width() + x] as u8 != MASKED {
                ew = ew.max(x + 1);
                eh = eh.max(y + 1);
            }
        }
    }
    Ok(Some(PredictionRecord {
        input: from_grid(&ig, (ew, eh))?,
        target: from_grid(&tg, (ew, eh))?,
        episode,
        step,
        d_n: ig.resolution(),
    }))
}

pub fn write_dataset<W: Write>(w: &mut W, records: &[PredictionRecord]) -> Result<(), PredictError> {
    for r in records {
        write_record(w, r)?;
    }
    Ok(())
}

pub fn read_dataset<R: BufRead>(r: &mut R) -> Result<Vec<PredictionRecord>, PredictError> {
    let mut out = Vec::new();
    while let Some(rec) = read_record(r)? {
        out.push(rec);
    }
    Ok(out)
}
