use std::io::{BufRead, Write};

use super::{Cell, Grid, WorldError};

/// Writes `P-OCC <width> <height> <d_m>\n` then row-major cell bytes.
pub fn write_map<W: Write>(w: &mut W, g: &Grid) -> Result<(), WorldError> {
    writeln!(w, "P-OCC {} {} {}", g.width(), g.height(), g.resolution())?;
    let bytes: Vec<u8> = g.cells().iter().map(|&c| c as u8).collect();
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_map<R: BufRead>(r: &mut R) -> Result<Grid, WorldError> {
    let mut header = String::new();
    r.read_line(&mut header)?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "P-OCC" {
        return Err(WorldError::Format(format!("bad header {:?}", header.trim_end())));
    }
    let width: usize = parts[1].parse().map_err(|_| WorldError::Format("bad width".into()))?;
    let height: usize = parts[2].parse().map_err(|_| WorldError::Format("bad height".into()))?;
    let d_m: f64 = parts[3]
        .parse()
        .map_err(|_| WorldError::Format("bad resolution".into()))?;
    let mut bytes = vec![0u8; width * height];
    r.read_exact(&mut bytes)
        .map_err(|e| WorldError::Format(format!("truncated cell data: {e}")))?;
    let cells = bytes
        .iter()
        .map(|&b| Cell::from_byte(b).ok_or_else(|| WorldError::Format(format!("bad cell byte {b}"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Grid::from_cells(width, height, d_m, cells))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::GridPos;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut g = Grid::filled(7, 3, 0.4, Cell::Unknown);
        g.set(GridPos::new(1, 1), Cell::Free);
        g.set(GridPos::new(6, 2), Cell::Occupied);
        let mut buf = Vec::new();
        write_map(&mut buf, &g).unwrap();
        let back = read_map(&mut buf.as_slice()).unwrap();
        assert_eq!(back, g);
        let mut buf2 = Vec::new();
        write_map(&mut buf2, &back).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn rejects_bad_bytes_and_headers() {
        let mut data = b"P-OCC 2 1 0.4\n".to_vec();
        data.extend([0u8, 7u8]);
        assert!(read_map(&mut data.as_slice()).is_err());
        assert!(read_map(&mut b"P-MAP 1 1 0.4\n\x00".as_slice()).is_err());
        assert!(read_map(&mut b"P-OCC 2 2 0.4\n\x00".as_slice()).is_err());
    }
}
