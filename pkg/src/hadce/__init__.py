"""Channel estimation toolkit for hybrid analog-digital massive MIMO."""
