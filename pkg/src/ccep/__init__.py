"""Extended common correlated effects pooled (CCEP) estimation for short panels."""
