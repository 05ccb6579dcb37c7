"""Port-Hamiltonian DAE effort identification with multi-task GPs."""
