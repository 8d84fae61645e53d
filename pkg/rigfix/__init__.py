"""Online self-rectification for a bendable two-camera rig."""
