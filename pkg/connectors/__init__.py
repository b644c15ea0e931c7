"""File formats and the artifact store."""
