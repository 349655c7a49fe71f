"""Airway geometry from CT: leak-resistant flood fill, bifurcation fitting, and PCA + linear SVM angle classification."""

__version__ = "0.1.0"
