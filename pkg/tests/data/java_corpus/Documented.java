package corpus.docs;

/**
 * A reader with lots of documentation.
 * <p>Multi-line javadoc { with braces }.</p>
 */
public class Documented {

    /** Size of the read buffer. */
    private int bufferSize = 8192;

    /**
     * Creates a reader with the default buffer.
     */
    public Documented() {
    }

    /**
     * Reads a header field.
     *
     * @param name field name
     * @return the field value
     */
    public String readField(String name) {
        return "value-of-" + name;
    }

    /** One-line javadoc. */
    public int size() {
        return bufferSize;
    }
}
