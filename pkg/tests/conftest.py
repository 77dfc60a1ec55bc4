def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, (passed, detail) in RESULTS.items():
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
