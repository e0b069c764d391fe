"""splitmap tests."""
