//! Net-motion magnitude of a chunk prefix and the bound `xi` derived from it.
//!
//! `m(l) = m_t(l) + m_r(l) + m_g(l)` where `m_t` is the norm of the summed
//! translation offsets, `m_r` the angle of the composed rotation and `m_g`
//! a 0/1 gripper-switch flag. All values are in native action units.

use super::{compose_rotations, rotation_angle, ActionChunk, ActionSpaceSpec, MagnitudeParams};
use crate::error::Result;

pub fn translation_magnitude(chunk: &ActionChunk, spec: &ActionSpaceSpec, l: usize) -> Result<f64> {
    chunk.check_prefix(l)?;
    let block = chunk.translation(spec, l);
    Ok(block
        .columns()
        .into_iter()
        .map(|col| {
            let s: f64 = col.sum();
            s * s
        })
        .sum::<f64>()
        .sqrt())
}

pub fn rotation_magnitude(chunk: &ActionChunk, spec: &ActionSpaceSpec, l: usize) -> Result<f64> {
    chunk.check_prefix(l)?;
    Ok(rotation_angle(&compose_rotations(
        chunk.rotation(spec, l),
        spec,
    )))
}

/// 1 if the binarized sequence `(prior, g_1, ..., g_l)` switches anywhere.
pub fn gripper_magnitude(
    chunk: &ActionChunk,
    spec: &ActionSpaceSpec,
    l: usize,
    params: &MagnitudeParams,
) -> Result<f64> {
    chunk.check_prefix(l)?;
    if !spec.has_gripper {
        return Ok(0.0);
    }
    let mut previous = params.prior_gripper_closed;
    for &g in chunk.gripper().iter().take(l) {
        let closed = spec.is_closed(g);
        if closed != previous {
            return Ok(1.0);
        }
        previous = closed;
    }
    Ok(0.0)
}

pub fn total_magnitude(
    chunk: &ActionChunk,
    spec: &ActionSpaceSpec,
    l: usize,
    params: &MagnitudeParams,
) -> Result<f64> {
    Ok(translation_magnitude(chunk, spec, l)?
        + rotation_magnitude(chunk, spec, l)?
        + gripper_magnitude(chunk, spec, l, params)?)
}

/// Smallest prefix length `l` with `m(l) > alpha`, or `H` when none exceeds it.
pub fn min_magnitude_bound(
    chunk: &ActionChunk,
    spec: &ActionSpaceSpec,
    params: &MagnitudeParams,
) -> usize {
    let horizon = chunk.horizon();
    (1..=horizon)
        .find(|&l| {
            total_magnitude(chunk, spec, l, params)
                .map(|m| m > params.alpha)
                .unwrap_or(false)
        })
        .unwrap_or(horizon)
}

#[cfg(test)]
mod tests {
    use ndarray::{array, Array1, Array2};

    use super::*;

    fn spatial_chunk(rows: Vec<[f64; 7]>) -> ActionChunk {
        let rows: Vec<Vec<f64>> = rows.into_iter().map(|r| r.to_vec()).collect();
        ActionChunk::from_rows(&rows, &ActionSpaceSpec::spatial()).unwrap()
    }

    fn open() -> MagnitudeParams {
        MagnitudeParams::new(3.0, false).unwrap()
    }

    #[test]
    fn translation_examples() {
        let spec = ActionSpaceSpec::spatial();
        let c = spatial_chunk(vec![
            [1., 0., 0., 0., 0., 0., 0.],
            [0., 1., 0., 0., 0., 0., 0.],
        ]);
        assert!((translation_magnitude(&c, &spec, 2).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let c = spatial_chunk(vec![
            [1., 0., 0., 0., 0., 0., 0.],
            [-1., 0., 0., 0., 0., 0., 0.],
        ]);
        assert_eq!(translation_magnitude(&c, &spec, 2).unwrap(), 0.0);
        assert!(matches!(
            translation_magnitude(&c, &spec, 3),
            Err(crate::Error::Range { l: 3, horizon: 2 })
        ));
        assert!(translation_magnitude(&c, &spec, 0).is_err());
    }

    #[test]
    fn yaw_rotation_examples() {
        let spec = ActionSpaceSpec::planar();
        let c = ActionChunk::new(array![[0., 0., 0.3], [0., 0., 0.3]], Array1::zeros(2)).unwrap();
        assert!((rotation_magnitude(&c, &spec, 2).unwrap() - 0.6).abs() < 1e-12);
        let c = ActionChunk::new(array![[0., 0., 0.3], [0., 0., -0.3]], Array1::zeros(2)).unwrap();
        assert!(rotation_magnitude(&c, &spec, 2).unwrap().abs() < 1e-12);
    }

    #[test]
    fn gripper_examples() {
        let spec = ActionSpaceSpec::planar();
        let chunk =
            |g: Vec<f64>| ActionChunk::new(Array2::zeros((g.len(), 3)), Array1::from(g)).unwrap();
        assert_eq!(
            gripper_magnitude(&chunk(vec![0., 0., 1.]), &spec, 3, &open()).unwrap(),
            1.0
        );
        assert_eq!(
            gripper_magnitude(&chunk(vec![0., 0.]), &spec, 2, &open()).unwrap(),
            0.0
        );
        let closed = MagnitudeParams::new(3.0, true).unwrap();
        assert_eq!(
            gripper_magnitude(&chunk(vec![0.]), &spec, 1, &closed).unwrap(),
            1.0
        );
        // below threshold counts as open
        assert_eq!(
            gripper_magnitude(&chunk(vec![0.49, 0.2]), &spec, 2, &open()).unwrap(),
            0.0
        );
        let no_gripper = ActionSpaceSpec::new(2, 1, false).unwrap();
        assert_eq!(
            gripper_magnitude(&chunk(vec![1.]), &no_gripper, 1, &open()).unwrap(),
            0.0
        );
    }

    #[test]
    fn total_examples() {
        let spec = ActionSpaceSpec::spatial();
        let c = spatial_chunk(vec![[1., 0., 0., 0., 0., 0., 0.]]);
        assert_eq!(total_magnitude(&c, &spec, 1, &open()).unwrap(), 1.0);

        let c = spatial_chunk(vec![
            [1., 0., 0., 0., 0., 0.3, 0.],
            [0., 1., 0., 0., 0., 0.3, 1.],
        ]);
        let expected = 2f64.sqrt() + 0.6 + 1.0;
        assert!((total_magnitude(&c, &spec, 2, &open()).unwrap() - expected).abs() < 1e-12);

        let z = ActionChunk::zeros(5, &spec, 0.0);
        for l in 1..=5 {
            assert_eq!(total_magnitude(&z, &spec, l, &open()).unwrap(), 0.0);
        }
    }

    #[test]
    fn xi_examples() {
        // cumulative translation magnitudes 0.5, 1.2, 3.4, 4.0 along x
        let spec = ActionSpaceSpec::planar();
        let c = ActionChunk::new(
            array![[0.5, 0., 0.], [0.7, 0., 0.], [2.2, 0., 0.], [0.6, 0., 0.]],
            Array1::zeros(4),
        )
        .unwrap();
        assert_eq!(min_magnitude_bound(&c, &spec, &open()), 3);

        let c = ActionChunk::new(array![[5.0, 0., 0.], [0., 0., 0.]], Array1::zeros(2)).unwrap();
        assert_eq!(min_magnitude_bound(&c, &spec, &open()), 1);

        let c = ActionChunk::new(Array2::from_elem((16, 3), 0.01), Array1::zeros(16)).unwrap();
        assert_eq!(min_magnitude_bound(&c, &spec, &open()), 16);
    }
}
