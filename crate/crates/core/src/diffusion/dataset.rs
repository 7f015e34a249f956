use std::io::{Read, Write};

use guide_neuralkit::Tensor;

use super::{DiffusionError, PolicyInput};

const MAGIC: &[u8; 6] = b"GEXPD1";

/// One expert planning step: encoder inputs, a link to the previous step of
/// the same episode for the observation history, and the expert's next
/// `T_p` normalized displacements.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertSample {
    pub episode: u32,
    pub step: u32,
    pub prev: Option<usize>,
    pub input: PolicyInput<f32>,
    pub actions: Vec<f32>,
}

fn put_u32(w: &mut impl Write, v: usize) -> std::io::Result<()> {
    w.write_all(&(v as u32).to_le_bytes())
}

fn put_tensor(w: &mut impl Write, t: &Tensor<f32>) -> std::io::Result<()> {
    put_u32(w, t.shape().len())?;
    for &d in t.shape() {
        put_u32(w, d)?;
    }
    for &x in t.data() {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn get_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_f32s(r: &mut impl Read, n: usize) -> std::io::Result<Vec<f32>> {
    let mut buf = vec![0u8; 4 * n];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn get_tensor(r: &mut impl Read) -> Result<Tensor<f32>, DiffusionError> {
    let rank = get_u32(r)? as usize;
    if rank > 4 {
        return Err(DiffusionError::Format(format!("tensor rank {rank}")));
    }
    let shape: Vec<usize> = (0..rank)
        .map(|_| get_u32(r).map(|v| v as usize))
        .collect::<Result<_, _>>()?;
    let n: usize = shape.iter().product();
    if n > 1 << 24 {
        return Err(DiffusionError::Format(format!("tensor of {n} values")));
    }
    Ok(Tensor::from_vec(&shape, get_f32s(r, n)?)?)
}

pub fn write_expert_dataset<W: Write>(w: &mut W, samples: &[ExpertSample]) -> Result<(), DiffusionError> {
    w.write_all(MAGIC)?;
    put_u32(w, samples.len())?;
    for s in samples {
        put_u32(w, s.episode as usize)?;
        put_u32(w, s.step as usize)?;
        put_u32(w, s.prev.map_or(u32::MAX as usize, |p| p))?;
        put_tensor(w, &s.input.nodes)?;
        put_tensor(w, &s.input.crop)?;
        put_u32(w, s.actions.len())?;
        for &a in &s.actions {
            w.write_all(&a.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_expert_dataset<R: Read>(r: &mut R) -> Result<Vec<ExpertSample>, DiffusionError> {
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(DiffusionError::Format("not an expert dataset".into()));
    }
    let n = get_u32(r)? as usize;
    let mut out = Vec::with_capacity(n.min(1 << 20));
    for i in 0..n {
        let episode = get_u32(r)?;
        let step = get_u32(r)?;
        let prev = match get_u32(r)? {
            u32::MAX => None,
            p if (p as usize) < i => Some(p as usize),
            p => return Err(DiffusionError::Format(format!("sample {i} links forward to {p}"))),
        };
        let nodes = get_tensor(r)?;
        let crop = get_tensor(r)?;
        let na = get_u32(r)? as usize;
        if na > 1024 {
            return Err(DiffusionError::Format(format!("{na} action values")));
        }
        let actions = get_f32s(r, na)?;
        out.push(ExpertSample {
            episode,
            step,
            prev,
            input: PolicyInput { nodes, crop },
            actions,
        });
    }
    Ok(out)
}
