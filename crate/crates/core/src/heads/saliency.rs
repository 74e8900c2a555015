use ndarray::Array1;

use super::{attention_forward, local_backward, Model};
use crate::error::{Error, Result};
use crate::feature_store::ActivationMap;
use crate::morph::ArchState;

/// `|∂score/∂map|` maxed over channels, as an `H·W` row-major grid.
///
/// The score is the target's pre-softmax logit in the head that finally
/// decides it: the local head of its group when one is trained, otherwise the
/// global head's logit for the node holding the class.
pub fn saliency(model: &Model, arch: &ArchState, map: &ActivationMap, target: usize) -> Result<Vec<f64>> {
    if target >= arch.num_classes() {
        return Err(Error::UnknownClass(target));
    }
    let grid = map.grid();
    let local = arch.group_of(target).and_then(|g| Some((g, model.local(g.group_id)?)));
    if let Some((group, head)) = local {
        let idx = group.local_index(target).expect("member of its group");
        let att = attention_forward(&model.attention.queries, map)?;
        let mut dz = Array1::zeros(head.head.arity());
        dz[idx] = 1.0;
        let back = local_backward(&model.attention.queries, &head.head, map.cells(), &att, &dz);
        return Ok(back.input.rows().into_iter().map(|r| r.iter().fold(0.0, |m: f64, v| m.max(v.abs()))).collect());
    }

    let node = arch.node_of(target)?;
    if node >= model.global.arity() || model.global.in_dim() != grid.d {
        return Err(Error::DimMismatch { expected: arch.arity(), got: model.global.arity() });
    }
    let peak = model.global.weights.row(node).iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    Ok(vec![peak / grid.cells() as f64; grid.cells()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature_store::Grid;
    use crate::heads::{init_params, LinearHead, LocalHead, ModelShape, SharedAttention};
    use ndarray::array;

    #[test]
    fn zero_model_has_zero_saliency() {
        let arch = ArchState::initial(4).unwrap().merge_pair(1, 2).unwrap();
        let model = crate::heads::Model::zeros(&ModelShape::for_arch(&arch, 3, 2, true));
        let map = ActivationMap::new(Grid::new(2, 2, 3), (0..12).map(|i| i as f64 * 0.1).collect()).unwrap();
        for c in 0..4 {
            assert!(saliency(&model, &arch, &map, c).unwrap().iter().all(|&v| v == 0.0));
        }
        assert!(matches!(saliency(&model, &arch, &map, 4), Err(Error::UnknownClass(4))));
    }

    #[test]
    fn global_saliency_is_uniform() {
        let arch = ArchState::initial(3).unwrap();
        let model = init_params(&ModelShape::for_arch(&arch, 4, 2, false), 5);
        let map = ActivationMap::new(Grid::new(2, 3, 4), vec![0.5; 24]).unwrap();
        let s = saliency(&model, &arch, &map, 1).unwrap();
        let expected = model.global.weights.row(1).iter().fold(0.0f64, |m, v| m.max(v.abs())) / 6.0;
        assert_eq!(s.len(), 6);
        assert!(s.iter().all(|&v| (v - expected).abs() < 1e-15));
    }

    #[test]
    fn local_saliency_follows_attention_mass() {
        // Two cells; the query strongly prefers cell 0, so the target logit is
        // sensitive to cell 0 and nearly flat in cell 1.
        let arch = ArchState::initial(2).unwrap().merge_pair(0, 1).unwrap();
        let map = ActivationMap::new(Grid::new(1, 2, 2), vec![4.0, 0.0, 0.0, 0.5]).unwrap();
        let model = crate::heads::Model {
            global: LinearHead::zeros(1, 2),
            attention: SharedAttention { queries: array![[4.0, 0.0]] },
            locals: vec![LocalHead {
                group_id: 0,
                head: LinearHead { weights: array![[1.0, 1.0], [0.0, 0.0]], biases: array![0.0, 0.0] },
            }],
        };
        let s = saliency(&model, &arch, &map, 0).unwrap();
        assert!(s[0] > 10.0 * s[1], "{s:?}");
        assert!(s.iter().all(|&v| v >= 0.0));
    }
}
