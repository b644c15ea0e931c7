"""Disk triangulation, density fields and ground-truth samples."""

from .mesh import DensityField, TriMesh, generate_disk_mesh

__all__ = ['DensityField', 'TriMesh', 'generate_disk_mesh']
