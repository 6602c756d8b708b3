//! Mesh, rotation and patch primitives shared by the oracle and the model.

mod mesh;
mod normals;
mod patch;
mod rotation;
mod spatial;
mod vec3;

pub use mesh::{Edge, EdgeKind, EdgeSet, GarmentAttributes, MeshState, MeshTopology};
pub use normals::{vertex_areas, vertex_normals, VertexNormals};
pub use patch::{patch_states, patchify, PatchMap, PatchStates};
pub use rotation::{canonical_frame, quat_to_matrix, Quaternion, RotationMatrix};
pub use spatial::{nearest_point, world_space_edges, Senders, SpatialHash};
pub use vec3::{mean, Vec3};
