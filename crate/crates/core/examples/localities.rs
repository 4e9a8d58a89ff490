//! Node data partitioned over simulated localities: ghost exchange with
//! the full-patch serializer, then with the Krylov-only one.

use std::sync::Arc;

use pbbem::distribution::{partition_by_tree, DistributedArray, FullPatchSerializer, KrylovSerializer, LocalityGroup, NodeState};
use pbbem::engine::Engine;
use pbbem::surface::{build_node_patches, generate_icosphere};
use pbbem::Vec3;

fn main() -> pbbem::Result<()> {
    let n_loc = 4;
    let patches = build_node_patches(&generate_icosphere(20.0, Vec3::zeros(), 4));
    let pos: Vec<Vec3> = patches.iter().map(|p| p.position).collect();
    let mut engine = Engine::new(1)?;
    let tree = engine.create_tree(&pos, &pos, None, 40)?;
    let partition = Arc::new(partition_by_tree(&engine.tree(tree)?.targets, n_loc)?);
    for k in 0..n_loc {
        println!("locality {k}: {} nodes", partition.span(k).len());
    }

    let group = LocalityGroup::new(n_loc)?;
    let mut nodes = DistributedArray::new(partition.clone(), Arc::new(FullPatchSerializer), |g| NodeState {
        index: g as u64,
        patch: patches[g].clone(),
        f: g as f64,
        h: -(g as f64),
    });
    // every locality asks for the first node of each other locality
    let requests: Vec<Vec<usize>> = (0..n_loc)
        .map(|k| (0..n_loc).filter(|&o| o != k).map(|o| partition.globals(o)[0]).collect())
        .collect();
    let mut ghosts = vec![vec![]; n_loc];
    let full = nodes.exchange(&group, &requests, &mut ghosts)?;
    println!("full patches: {full:?}");

    nodes.set_manager(Arc::new(KrylovSerializer));
    for node in nodes.local_mut(1) {
        node.f += 1000.0;
    }
    let krylov = nodes.exchange(&group, &requests, &mut ghosts)?;
    println!("krylov only:  {krylov:?}");
    let g = &ghosts[0][0];
    println!("locality 0 ghost of node {}: f = {}, {} sub-elements kept", g.index, g.f, g.patch.sub_elements.len());
    println!("traffic: {:?}", group.traffic());
    Ok(())
}
