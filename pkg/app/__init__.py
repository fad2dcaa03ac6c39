# Cell division eigen toolkit package
