//! Flat little-endian model file.
//!
//! ```text
//! magic "AACFLOW\0" | version u32 | spec hash u64
//! translation_dims u32 | rotation_dims u32 | has_gripper u8 | gripper_threshold f64
//! horizon u32 | observation_dim u32 | euler_steps u32 | sign u8 | data_variance f64
//! layer-dim count u32 | dims u32...
//! parameters f64... (per layer: weights row-major, then bias)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::flow::{FieldSign, FlowModel};
use super::mlp::Mlp;
use crate::action::ActionSpaceSpec;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"AACFLOW\0";
const VERSION: u32 = 1;

fn spec_hash(spec: &ActionSpaceSpec, horizon: usize, observation_dim: usize) -> u64 {
    let key = format!(
        "t{}r{}g{}th{:016x}h{}o{}",
        spec.translation_dims,
        spec.rotation_dims,
        spec.has_gripper as u8,
        spec.gripper_threshold.to_bits(),
        horizon,
        observation_dim
    );
    // FNV-1a
    key.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn write_model<W: Write>(out: &mut W, model: &FlowModel) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&spec_hash(&model.spec, model.horizon, model.observation_dim).to_le_bytes())?;
    out.write_all(&(model.spec.translation_dims as u32).to_le_bytes())?;
    out.write_all(&(model.spec.rotation_dims as u32).to_le_bytes())?;
    out.write_all(&[model.spec.has_gripper as u8])?;
    out.write_all(&model.spec.gripper_threshold.to_le_bytes())?;
    out.write_all(&(model.horizon as u32).to_le_bytes())?;
    out.write_all(&(model.observation_dim as u32).to_le_bytes())?;
    out.write_all(&(model.euler_steps as u32).to_le_bytes())?;
    out.write_all(&[match model.sign {
        FieldSign::Negate => 0u8,
        FieldSign::Add => 1u8,
    }])?;
    out.write_all(&model.data_variance.to_le_bytes())?;
    let dims = model.net.dims();
    out.write_all(&(dims.len() as u32).to_le_bytes())?;
    for d in dims {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    for p in model.net.flat_parameters() {
        out.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(input: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input
        .read_exact(&mut buf)
        .map_err(|e| Error::ModelFormat(format!("truncated file: {e}")))?;
    Ok(buf)
}

fn read_u32<R: Read>(input: &mut R) -> Result<usize> {
    Ok(u32::from_le_bytes(read_array(input)?) as usize)
}

pub fn read_model<R: Read>(input: &mut R) -> Result<FlowModel> {
    if &read_array::<8, _>(input)? != MAGIC {
        return Err(Error::ModelFormat("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(read_array(input)?);
    if version != VERSION {
        return Err(Error::ModelFormat(format!("unsupported version {version}")));
    }
    let stored_hash = u64::from_le_bytes(read_array(input)?);
    let translation_dims = read_u32(input)?;
    let rotation_dims = read_u32(input)?;
    let has_gripper = read_array::<1, _>(input)?[0] != 0;
    let gripper_threshold = f64::from_le_bytes(read_array(input)?);
    let spec = ActionSpaceSpec::new(translation_dims, rotation_dims, has_gripper)?
        .with_gripper_threshold(gripper_threshold)?;
    let horizon = read_u32(input)?;
    let observation_dim = read_u32(input)?;
    if spec_hash(&spec, horizon, observation_dim) != stored_hash {
        return Err(Error::ModelFormat("spec hash mismatch".into()));
    }
    let euler_steps = read_u32(input)?;
    let sign = match read_array::<1, _>(input)?[0] {
        0 => FieldSign::Negate,
        1 => FieldSign::Add,
        s => return Err(Error::ModelFormat(format!("unknown sign flag {s}"))),
    };
    let data_variance = f64::from_le_bytes(read_array(input)?);
    if !(data_variance >= 0.0) || !data_variance.is_finite() {
        return Err(Error::ModelFormat(format!(
            "bad data variance {data_variance}"
        )));
    }
    let n_dims = read_u32(input)?;
    if !(2..=64).contains(&n_dims) {
        return Err(Error::ModelFormat(format!(
            "implausible layer count {n_dims}"
        )));
    }
    let dims = (0..n_dims)
        .map(|_| read_u32(input))
        .collect::<Result<Vec<_>>>()?;
    let chunk_dim = horizon * spec.row_width();
    if dims[0] != observation_dim + chunk_dim + super::TIME_FEATURES
        || dims[n_dims - 1] != chunk_dim
    {
        return Err(Error::ModelFormat(format!(
            "layer dims {dims:?} do not fit the action spec"
        )));
    }
    let mut net = Mlp::zeros(&dims);
    let params = (0..net.parameter_count())
        .map(|_| Ok(f64::from_le_bytes(read_array(input)?)))
        .collect::<Result<Vec<_>>>()?;
    net.set_flat_parameters(&params);
    Ok(FlowModel {
        spec,
        horizon,
        observation_dim,
        euler_steps,
        sign,
        data_variance,
        net,
    })
}

pub fn save_model(path: &Path, model: &FlowModel) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_model(&mut out, model)?;
    out.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<FlowModel> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingModel {
            path: path.to_path_buf(),
        },
        _ => Error::Io(e),
    })?;
    read_model(&mut BufReader::new(file))
}
