"""On-disk formats: binary tag files, histogram CSV and JSON reports."""
