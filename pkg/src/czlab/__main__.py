from czlab.main import main

raise SystemExit(main())
