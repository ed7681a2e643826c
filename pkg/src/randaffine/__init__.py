"""Option pricing with randomized affine diffusions."""
