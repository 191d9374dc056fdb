"""User-facing integration layer: HTTP portal, async jobs, selection compiler."""
