"""pbrboost: add PBR materials and refined normals to image-to-3D meshes."""

__version__ = "0.1.0"
