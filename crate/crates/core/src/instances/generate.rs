use rand::Rng;
use rand_distr::{Distribution, Weibull};
use std::collections::BTreeMap;

use super::{BppInstance, Dataset, InstanceError, Instances, Provenance, TspInstance};
use crate::rng::instance_stream;

pub const WEIBULL_SHAPE: f64 = 3.0;
pub const WEIBULL_SCALE: f64 = 45.0;

/// `count` instances of `n` cities drawn i.i.d. uniform on the unit square.
pub fn gen_tsp_dataset(n: usize, count: usize, seed: u64) -> Result<Dataset, InstanceError> {
    if n < 2 || count == 0 {
        return Err(InstanceError::Invalid(format!(
            "gen_tsp_dataset needs n >= 2 and count >= 1 (got n={n}, count={count})"
        )));
    }
    let instances = (0..count)
        .map(|k| {
            let mut rng = instance_stream(seed, k as u64);
            let coords = (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
            TspInstance::new(format!("tsp{n}-{seed}-{k}"), coords)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut params = BTreeMap::new();
    params.insert("n".to_string(), n.into());
    params.insert("count".to_string(), count.into());
    params.insert("distribution".to_string(), "uniform_unit_square".into());
    Ok(Dataset::new(
        format!("tsp{n}"),
        Instances::Tsp(instances),
        Provenance { generator: "gen_tsp_dataset".into(), seed: Some(seed), params },
    ))
}

/// Item streams with Weibull(shape 3, scale 45) weights, rounded up and
/// clipped to `[1, capacity]`.
pub fn gen_bpp_dataset(
    num_items: usize,
    capacity: u32,
    count: usize,
    seed: u64,
) -> Result<Dataset, InstanceError> {
    if num_items == 0 || capacity == 0 || count == 0 {
        return Err(InstanceError::Invalid(format!(
            "gen_bpp_dataset needs num_items, capacity, count >= 1 (got {num_items}, {capacity}, {count})"
        )));
    }
    let weibull = Weibull::new(WEIBULL_SCALE, WEIBULL_SHAPE).expect("valid Weibull parameters");
    let instances = (0..count)
        .map(|k| {
            let mut rng = instance_stream(seed, k as u64);
            let weights = (0..num_items)
                .map(|_| {
                    let w: f64 = weibull.sample(&mut rng);
                    w.ceil().clamp(1.0, capacity as f64) as u32
                })
                .collect();
            BppInstance::new(format!("bpp{num_items}c{capacity}-{seed}-{k}"), capacity, weights)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut params = BTreeMap::new();
    params.insert("num_items".to_string(), num_items.into());
    params.insert("capacity".to_string(), capacity.into());
    params.insert("count".to_string(), count.into());
    params.insert("distribution".to_string(), "weibull(3,45)".into());
    Ok(Dataset::new(
        format!("bpp{num_items}c{capacity}"),
        Instances::Bpp(instances),
        Provenance { generator: "gen_bpp_dataset".into(), seed: Some(seed), params },
    ))
}
