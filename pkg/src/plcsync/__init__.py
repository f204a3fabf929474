"""Joint sampling phase and clock offset estimation for baseband OFDM power-line links."""
